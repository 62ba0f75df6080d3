// certify: worst-case and probabilistic robustness radii for a JSON model.
//
// Exit status: 0 on success, 2 if some inputs could not be certified,
// 1 on fatal errors (bad flags, unreadable model, ...).

#include "proven/driver.hpp"
#include "proven/errors.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using namespace proven;

namespace {

std::vector<double> parse_confidence_list(const std::string& text) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        std::size_t used = 0;
        const double v = std::stod(item, &used);
        if (used != item.size()) throw Error("bad confidence '" + item + "'");
        out.push_back(v);
    }
    return out;
}

void parse_targets(const std::string& text, BatchOptions& options) {
    if (text == "all") {
        options.target_policy = TargetPolicy::all;
        return;
    }
    if (text == "random") {
        options.target_policy = TargetPolicy::random;
        return;
    }
    options.target_policy = TargetPolicy::explicit_list;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        std::size_t used = 0;
        const int t = std::stoi(item, &used);
        if (used != item.size()) throw Error("bad target '" + item + "'");
        options.explicit_targets.push_back(t);
    }
    if (options.explicit_targets.empty()) throw Error("empty target list");
}

std::vector<fs::path> list_inputs(const fs::path& dir) {
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir))
        if (entry.is_regular_file() && entry.path().extension() == ".json")
            files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    return files;
}

void write_file(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    out << text;
}

// Per-layer pre-activation bounds of every certified input at its worst-case radius.
nlohmann::ordered_json dump_bounds(const Network& net, const Report& report,
                                   const std::vector<NamedInput>& inputs) {
    nlohmann::ordered_json doc = nlohmann::ordered_json::array();
    for (std::size_t i = 0; i < report.inputs.size(); ++i) {
        const InputResult& r = report.inputs[i];
        if (!r.ok) continue;
        const auto it = std::find_if(inputs.begin(), inputs.end(),
                                     [&](const NamedInput& in) { return in.name == r.name; });
        if (it == inputs.end()) continue;
        const InputSpec spec = make_input_spec(net, it->input.x0, r.eps_worst_case,
                                               report.options.norm, r.targets);
        const PreactivationBounds b =
            compute_preactivation_bounds(net, spec, report.options.settings.mode);
        nlohmann::ordered_json layers = nlohmann::ordered_json::array();
        for (std::size_t k = 0; k < b.lower.size(); ++k) {
            layers.push_back({{"lower", std::vector<double>(b.lower[k].begin(), b.lower[k].end())},
                              {"upper", std::vector<double>(b.upper[k].begin(), b.upper[k].end())}});
        }
        doc.push_back({{"name", r.name}, {"epsilon", r.eps_worst_case}, {"layers", layers}});
    }
    return doc;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Certify worst-case and probabilistic robustness radii of a feed-forward classifier"};

    std::string model_path;
    std::vector<std::string> input_files;
    std::string inputs_dir;
    std::string norm = "inf";
    std::string mode = "adaptive";
    std::string noise = "bounded";
    std::string cov_path;
    std::string method = "hoeffding";
    std::string confidences = "0.9999,0.75,0.5,0.25,0.05";
    std::string targets = "all";
    std::string agg = "min";
    double eps_max = 1.0;
    double tol = 1e-4;
    std::uint64_t seed = 0;
    std::string out_path;
    std::string csv_path;
    std::uint64_t validate_mc = 0;
    std::size_t grid_points = kDefaultConvolutionGrid;
    std::string bounds_path;

    app.add_option("--model", model_path, "Model JSON")->required()->check(CLI::ExistingFile);
    app.add_option("--input", input_files, "Input JSON (repeatable)")->check(CLI::ExistingFile);
    app.add_option("--inputs", inputs_dir, "Directory of input JSON files")
        ->check(CLI::ExistingDirectory);
    app.add_option("--norm", norm, "Perturbation norm")
        ->check(CLI::IsMember({"inf", "1", "2"}))
        ->capture_default_str();
    app.add_option("--mode", mode, "ReLU relaxation")
        ->check(CLI::IsMember({"fastlin", "adaptive"}))
        ->capture_default_str();
    app.add_option("--noise", noise, "Input noise model")
        ->check(CLI::IsMember({"bounded", "gaussian"}))
        ->capture_default_str();
    app.add_option("--cov", cov_path, "Covariance JSON for gaussian noise")
        ->check(CLI::ExistingFile);
    app.add_option("--method", method, "Certificate method")
        ->check(CLI::IsMember({"hoeffding", "gaussian", "convolution"}))
        ->capture_default_str();
    app.add_option("--confidences", confidences, "Comma-separated confidence levels")
        ->capture_default_str();
    app.add_option("--targets", targets, "all, random, or a comma-separated class list")
        ->capture_default_str();
    app.add_option("--agg", agg, "Multi-target aggregation")
        ->check(CLI::IsMember({"min", "union"}))
        ->capture_default_str();
    app.add_option("--eps-max", eps_max, "Upper end of the radius search")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    app.add_option("--tol", tol, "Relative bisection tolerance")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    app.add_option("--seed", seed, "Seed for target sampling and validation")->capture_default_str();
    app.add_option("--out", out_path, "Report JSON path (stdout if omitted)");
    app.add_option("--csv", csv_path, "Table-shaped CSV report path");
    app.add_option("--validate-mc", validate_mc,
                   "Monte-Carlo samples per radius for validation (0 = off)");
    app.add_option("--grid-points", grid_points, "Convolution grid size")->capture_default_str();
    app.add_option("--dump-bounds", bounds_path,
                   "Write per-layer pre-activation bounds at the worst-case radius");

    CLI11_PARSE(app, argc, argv);

    try {
        CertificationRequest request;
        request.model_path = model_path;
        for (const auto& f : input_files) request.input_paths.emplace_back(f);
        if (!inputs_dir.empty())
            for (auto& f : list_inputs(inputs_dir)) request.input_paths.push_back(std::move(f));
        if (request.input_paths.empty()) throw Error("no inputs given (use --input or --inputs)");
        if (!cov_path.empty()) {
            if (noise != "gaussian") throw Error("--cov only applies to --noise gaussian");
            request.covariance_path = cov_path;
        }

        BatchOptions& options = request.options;
        options.norm = parse_norm(norm);
        options.settings.mode = parse_relaxation_mode(mode);
        options.settings.noise = parse_noise_kind(noise);
        options.settings.method = parse_certificate_method(method);
        options.settings.aggregation = parse_aggregation(agg);
        options.settings.grid_points = grid_points;
        options.settings.bisection.eps_max = eps_max;
        options.settings.bisection.tolerance = tol;
        options.confidences = parse_confidence_list(confidences);
        options.seed = seed;
        options.validate_mc = validate_mc;
        parse_targets(targets, options);

        const Report report = run_batch(request);
        const std::string json_text = report_to_json(report).dump(2) + "\n";
        if (out_path.empty())
            std::cout << json_text;
        else
            write_file(out_path, json_text);
        if (!csv_path.empty()) write_file(csv_path, report_to_csv(report));

        if (!bounds_path.empty()) {
            const Network net = load_network(request.model_path);
            std::vector<NamedInput> inputs;
            for (const auto& p : request.input_paths) {
                try {
                    inputs.push_back({p.filename().string(), load_input(p)});
                } catch (const Error&) {
                }
            }
            write_file(bounds_path, dump_bounds(net, report, inputs).dump(2) + "\n");
        }

        for (const InputResult& r : report.inputs)
            if (!r.ok) std::cerr << "certify: " << r.name << ": " << r.error << '\n';
        return report.failures > 0 ? 2 : 0;
    } catch (const std::exception& e) {
        std::cerr << "certify: " << e.what() << '\n';
        return 1;
    }
}
