#include "proven/network.hpp"

#include "proven/errors.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace proven {

using json = nlohmann::json;

std::string_view to_string(Activation act) {
    switch (act) {
        case Activation::relu: return "relu";
        case Activation::tanh: return "tanh";
        case Activation::sigmoid: return "sigmoid";
        case Activation::arctan: return "arctan";
        case Activation::identity: return "identity";
    }
    return "identity";
}

Activation parse_activation(std::string_view name) {
    if (name == "relu") return Activation::relu;
    if (name == "tanh") return Activation::tanh;
    if (name == "sigmoid") return Activation::sigmoid;
    if (name == "arctan") return Activation::arctan;
    if (name == "identity") return Activation::identity;
    throw ActivationError("unknown activation '" + std::string(name) + "'");
}

double activate(Activation act, double s) {
    switch (act) {
        case Activation::relu: return s > 0.0 ? s : 0.0;
        case Activation::tanh: return std::tanh(s);
        case Activation::sigmoid: return 1.0 / (1.0 + std::exp(-s));
        case Activation::arctan: return std::atan(s);
        case Activation::identity: return s;
    }
    return s;
}

double activate_derivative(Activation act, double s) {
    switch (act) {
        case Activation::relu: return s > 0.0 ? 1.0 : 0.0;
        case Activation::tanh: {
            const double t = std::tanh(s);
            return 1.0 - t * t;
        }
        case Activation::sigmoid: {
            const double v = 1.0 / (1.0 + std::exp(-s));
            return v * (1.0 - v);
        }
        case Activation::arctan: return 1.0 / (1.0 + s * s);
        case Activation::identity: return 1.0;
    }
    return 1.0;
}

std::string_view to_string(Norm p) {
    switch (p) {
        case Norm::l1: return "1";
        case Norm::l2: return "2";
        case Norm::linf: return "inf";
    }
    return "inf";
}

Norm parse_norm(std::string_view name) {
    if (name == "1" || name == "l1") return Norm::l1;
    if (name == "2" || name == "l2") return Norm::l2;
    if (name == "inf" || name == "linf") return Norm::linf;
    throw Error("unsupported norm '" + std::string(name) + "' (expected 1, 2 or inf)");
}

double dual_norm(const Eigen::Ref<const RowVector>& v, Norm p) {
    switch (p) {
        case Norm::l1: return v.cwiseAbs().maxCoeff();
        case Norm::l2: return v.norm();
        case Norm::linf: return v.cwiseAbs().sum();
    }
    return 0.0;
}

double norm(const Eigen::Ref<const Vector>& v, Norm p) {
    if (v.size() == 0) return 0.0;
    switch (p) {
        case Norm::l1: return v.cwiseAbs().sum();
        case Norm::l2: return v.norm();
        case Norm::linf: return v.cwiseAbs().maxCoeff();
    }
    return 0.0;
}

Network::Network(std::vector<Layer> layers) : layers_(std::move(layers)) {
    if (layers_.empty()) throw DimensionError(0, "network has no layers");
    for (std::size_t k = 0; k < layers_.size(); ++k) {
        const Layer& layer = layers_[k];
        if (layer.weights.rows() == 0 || layer.weights.cols() == 0)
            throw DimensionError(k, "empty weight matrix");
        if (layer.bias.size() != layer.weights.rows())
            throw DimensionError(k, "bias has " + std::to_string(layer.bias.size()) +
                                        " entries but weights have " +
                                        std::to_string(layer.weights.rows()) + " rows");
        if (k > 0 && layer.weights.cols() != layers_[k - 1].weights.rows())
            throw DimensionError(k, "weights have " + std::to_string(layer.weights.cols()) +
                                        " columns but previous layer has " +
                                        std::to_string(layers_[k - 1].weights.rows()) +
                                        " outputs");
        if (!layer.weights.allFinite() || !layer.bias.allFinite())
            throw DimensionError(k, "non-finite weight or bias");
    }
    if (output_dim() < 2) throw DimensionError(layers_.size() - 1, "need at least two classes");
}

Eigen::Index Network::max_width() const noexcept {
    Eigen::Index w = input_dim();
    for (const Layer& layer : layers_) w = std::max(w, layer.weights.rows());
    return w;
}

Vector forward(const Network& net, const Eigen::Ref<const Vector>& x) {
    if (x.size() != net.input_dim())
        throw DimensionError(0, "input has " + std::to_string(x.size()) + " entries, expected " +
                                    std::to_string(net.input_dim()));
    Vector a = x;
    for (const Layer& layer : net.layers()) {
        Vector z = layer.weights * a + layer.bias;
        if (layer.activation != Activation::identity)
            z = z.unaryExpr([act = layer.activation](double s) { return activate(act, s); });
        a = std::move(z);
    }
    return a;
}

namespace {

void check_class(const Network& net, int k) {
    if (k < 0 || k >= net.output_dim())
        throw ClassIndexError("class index " + std::to_string(k) + " outside [0, " +
                              std::to_string(net.output_dim()) + ")");
}

}  // namespace

double margin(const Network& net, const Eigen::Ref<const Vector>& x, int c, int t) {
    check_class(net, c);
    check_class(net, t);
    if (c == t) throw ClassIndexError("margin needs two distinct classes");
    const Vector logits = forward(net, x);
    return logits[c] - logits[t];
}

int predicted_class(const Network& net, const Eigen::Ref<const Vector>& x) {
    const Vector logits = forward(net, x);
    Eigen::Index best = 0;
    logits.maxCoeff(&best);
    for (Eigen::Index i = 0; i < logits.size(); ++i) {
        if (i != best && logits[i] == logits[best])
            throw TiedPredictionError("classes " + std::to_string(best) + " and " +
                                      std::to_string(i) + " tie at the anchor input");
    }
    return static_cast<int>(best);
}

ForwardWorkspace::ForwardWorkspace(const Network& net)
    : net_(&net), a_(net.max_width()), b_(net.max_width()) {}

Eigen::VectorBlock<const Vector> ForwardWorkspace::evaluate(const Eigen::Ref<const Vector>& x) {
    Eigen::Index n = x.size();
    a_.head(n) = x;
    for (const Layer& layer : net_->layers()) {
        const Eigen::Index m = layer.weights.rows();
        b_.head(m).noalias() = layer.weights * a_.head(n);
        b_.head(m) += layer.bias;
        if (layer.activation != Activation::identity) {
            for (Eigen::Index i = 0; i < m; ++i) b_[i] = activate(layer.activation, b_[i]);
        }
        a_.swap(b_);
        n = m;
    }
    return static_cast<const Vector&>(a_).head(n);
}

InputSpec InputSpec::with_epsilon(double eps) const {
    InputSpec copy = *this;
    copy.epsilon = eps;
    return copy;
}

InputSpec make_input_spec(const Network& net, Vector x0, double epsilon, Norm p,
                          std::vector<int> targets) {
    if (!(epsilon >= 0.0) || !std::isfinite(epsilon))
        throw NumericError("epsilon must be a finite nonnegative number");
    if (x0.size() != net.input_dim())
        throw DimensionError(0, "anchor input has " + std::to_string(x0.size()) +
                                    " entries, expected " + std::to_string(net.input_dim()));
    if (!x0.allFinite()) throw NumericError("anchor input has non-finite entries");

    InputSpec spec;
    spec.predicted = predicted_class(net, x0);
    spec.x0 = std::move(x0);
    spec.epsilon = epsilon;
    spec.norm = p;
    if (targets.empty()) {
        for (int t = 0; t < net.output_dim(); ++t)
            if (t != spec.predicted) spec.targets.push_back(t);
    } else {
        std::sort(targets.begin(), targets.end());
        targets.erase(std::unique(targets.begin(), targets.end()), targets.end());
        for (int t : targets) {
            check_class(net, t);
            if (t == spec.predicted)
                throw ClassIndexError("target " + std::to_string(t) + " is the predicted class");
        }
        spec.targets = std::move(targets);
    }
    return spec;
}

namespace {

json parse_json(std::string_view text) {
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw ParseError(e.what(), e.byte);
    }
}

Vector to_vector(const json& arr, const std::string& what) {
    if (!arr.is_array()) throw ParseError(what + " must be an array");
    Vector v(static_cast<Eigen::Index>(arr.size()));
    for (std::size_t i = 0; i < arr.size(); ++i) {
        if (!arr[i].is_number()) throw ParseError(what + " must contain numbers");
        v[static_cast<Eigen::Index>(i)] = arr[i].get<double>();
    }
    return v;
}

json to_json(const Eigen::Ref<const Vector>& v) {
    json arr = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v[i]);
    return arr;
}

}  // namespace

Network parse_network(std::string_view text) {
    const json doc = parse_json(text);
    if (!doc.is_object() || !doc.contains("layers") || !doc["layers"].is_array())
        throw ParseError("model must be an object with a 'layers' array");

    std::vector<Layer> layers;
    std::size_t k = 0;
    for (const json& entry : doc["layers"]) {
        if (!entry.is_object() || !entry.contains("weights") || !entry.contains("bias"))
            throw ParseError("layer " + std::to_string(k) + " needs 'weights' and 'bias'");
        const json& rows = entry["weights"];
        if (!rows.is_array() || rows.empty() || !rows[0].is_array())
            throw ParseError("layer " + std::to_string(k) + " weights must be a nested array");
        const std::size_t cols = rows[0].size();
        Layer layer;
        layer.weights.resize(static_cast<Eigen::Index>(rows.size()),
                             static_cast<Eigen::Index>(cols));
        for (std::size_t i = 0; i < rows.size(); ++i) {
            if (!rows[i].is_array() || rows[i].size() != cols)
                throw DimensionError(k, "weight row " + std::to_string(i) + " has " +
                                            std::to_string(rows[i].size()) +
                                            " entries, expected " + std::to_string(cols));
            layer.weights.row(static_cast<Eigen::Index>(i)) =
                to_vector(rows[i], "weights").transpose();
        }
        layer.bias = to_vector(entry["bias"], "bias");
        const std::string act = entry.value("activation", std::string("identity"));
        layer.activation = parse_activation(act);
        layers.push_back(std::move(layer));
        ++k;
    }
    if (doc.contains("input_dim")) {
        if (!doc["input_dim"].is_number_integer()) throw ParseError("input_dim must be an integer");
        const auto n0 = doc["input_dim"].get<long long>();
        if (!layers.empty() && n0 != layers.front().weights.cols())
            throw DimensionError(0, "input_dim is " + std::to_string(n0) +
                                        " but first layer has " +
                                        std::to_string(layers.front().weights.cols()) +
                                        " columns");
    }
    return Network(std::move(layers));
}

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

Network load_network(const std::filesystem::path& path) {
    return parse_network(read_text_file(path));
}

std::string serialize_network(const Network& net) {
    json doc;
    doc["input_dim"] = net.input_dim();
    json layers = json::array();
    for (const Layer& layer : net.layers()) {
        json rows = json::array();
        for (Eigen::Index i = 0; i < layer.weights.rows(); ++i)
            rows.push_back(to_json(layer.weights.row(i).transpose()));
        layers.push_back({{"weights", std::move(rows)},
                          {"bias", to_json(layer.bias)},
                          {"activation", std::string(to_string(layer.activation))}});
    }
    doc["layers"] = std::move(layers);
    return doc.dump();
}

void save_network(const Network& net, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    out << serialize_network(net) << '\n';
}

InputFile parse_input(std::string_view text) {
    const json doc = parse_json(text);
    if (!doc.is_object() || !doc.contains("x0")) throw ParseError("input must contain 'x0'");
    InputFile input;
    input.x0 = to_vector(doc["x0"], "x0");
    if (doc.contains("label") && !doc["label"].is_null()) {
        if (!doc["label"].is_number_integer()) throw ParseError("label must be an integer");
        input.label = doc["label"].get<int>();
    }
    return input;
}

InputFile load_input(const std::filesystem::path& path) {
    return parse_input(read_text_file(path));
}

}  // namespace proven
