#pragma once

#include <Eigen/Dense>

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace proven {

using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;
using Matrix = Eigen::MatrixXd;

enum class Activation { relu, tanh, sigmoid, arctan, identity };

std::string_view to_string(Activation act);
Activation parse_activation(std::string_view name);

double activate(Activation act, double s);
double activate_derivative(Activation act, double s);

enum class Norm { l1, l2, linf };

std::string_view to_string(Norm p);
Norm parse_norm(std::string_view name);

/// ||v||_q where q is the Hoelder dual of `p`.
double dual_norm(const Eigen::Ref<const RowVector>& v, Norm p);
double norm(const Eigen::Ref<const Vector>& v, Norm p);

struct Layer {
    Matrix weights;  // [n_k x n_{k-1}]
    Vector bias;     // [n_k]
    Activation activation = Activation::identity;
};

/// Immutable feed-forward classifier. Construction validates the dimension
/// chain, finiteness, and that there are at least two output classes.
class Network {
public:
    explicit Network(std::vector<Layer> layers);

    const std::vector<Layer>& layers() const noexcept { return layers_; }
    std::size_t num_layers() const noexcept { return layers_.size(); }
    Eigen::Index input_dim() const noexcept { return layers_.front().weights.cols(); }
    Eigen::Index output_dim() const noexcept { return layers_.back().weights.rows(); }
    Eigen::Index max_width() const noexcept;

private:
    std::vector<Layer> layers_;
};

Vector forward(const Network& net, const Eigen::Ref<const Vector>& x);

/// f_c(x) - f_t(x).
double margin(const Network& net, const Eigen::Ref<const Vector>& x, int c, int t);

/// Strict argmax of the logits; throws TiedPredictionError on a tie.
int predicted_class(const Network& net, const Eigen::Ref<const Vector>& x);

/// Reusable scratch buffers for evaluating many points without allocating.
class ForwardWorkspace {
public:
    explicit ForwardWorkspace(const Network& net);

    /// Logits for `x`; the returned block is valid until the next call.
    Eigen::VectorBlock<const Vector> evaluate(const Eigen::Ref<const Vector>& x);

private:
    const Network* net_;
    Vector a_;
    Vector b_;
};

/// Anchor point, ball and the targets to certify against. `predicted` is
/// always recomputed from the network.
struct InputSpec {
    Vector x0;
    double epsilon = 0.0;
    Norm norm = Norm::linf;
    int predicted = 0;
    std::vector<int> targets;

    InputSpec with_epsilon(double eps) const;
};

/// Builds an InputSpec; an empty `targets` expands to every class but the
/// predicted one.
InputSpec make_input_spec(const Network& net, Vector x0, double epsilon, Norm p,
                          std::vector<int> targets = {});

// Model and input files (JSON, row-major decimal arrays).
Network parse_network(std::string_view text);
Network load_network(const std::filesystem::path& path);
std::string serialize_network(const Network& net);
void save_network(const Network& net, const std::filesystem::path& path);

struct InputFile {
    Vector x0;
    std::optional<int> label;
};

InputFile parse_input(std::string_view text);
InputFile load_input(const std::filesystem::path& path);

std::string read_text_file(const std::filesystem::path& path);

}  // namespace proven
