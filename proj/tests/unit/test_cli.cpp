#include "proven/network.hpp"
#include "test_support.hpp"

#include <doctest.h>
#include <nlohmann/json.hpp>

#include <sys/wait.h>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace proven;
using namespace proven::testing;
namespace fs = std::filesystem;

#ifndef CERTIFY_PATH
#error "CERTIFY_PATH must point at the certify executable"
#endif

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("certify-cli-" + std::to_string(::getpid()) + "-" + std::to_string(counter()++));
        fs::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
    static int& counter() {
        static int n = 0;
        return n;
    }
};

void write(const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    out << text;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

int run(const std::string& args) {
    const std::string cmd = std::string(CERTIFY_PATH) + " " + args + " 2>/dev/null";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string input_json(const Vector& x) {
    nlohmann::json doc;
    doc["x0"] = std::vector<double>(x.begin(), x.end());
    return doc.dump();
}

}  // namespace

TEST_CASE("certify end to end") {
    TempDir dir;
    std::mt19937_64 gen(1);
    const Network net = random_network(gen, {3, 8, 3}, Activation::relu);
    write(dir.path / "model.json", serialize_network(net));
    fs::create_directories(dir.path / "inputs");
    for (int i = 0; i < 3; ++i)
        write(dir.path / "inputs" / ("in" + std::to_string(i) + ".json"),
              input_json(strict_anchor(gen, net)));

    const std::string base = "--model " + (dir.path / "model.json").string() + " --inputs " +
                             (dir.path / "inputs").string() + " --seed 7 --targets random";
    REQUIRE(run(base + " --out " + (dir.path / "a.json").string() + " --csv " +
                (dir.path / "a.csv").string()) == 0);
    REQUIRE(run(base + " --out " + (dir.path / "b.json").string()) == 0);
    CHECK(slurp(dir.path / "a.json") == slurp(dir.path / "b.json"));

    const auto doc = nlohmann::json::parse(slurp(dir.path / "a.json"));
    CHECK(doc["inputs"].size() == 3);
    CHECK(doc["provenance"]["seed"] == 7);
    CHECK(slurp(dir.path / "a.csv").rfind("input,predicted,eps_worst_case", 0) == 0);

    CHECK(run(base + " --method convolution --grid-points 1024 --out " +
              (dir.path / "c.json").string() + " --dump-bounds " +
              (dir.path / "bounds.json").string()) == 0);
    const auto bounds = nlohmann::json::parse(slurp(dir.path / "bounds.json"));
    CHECK(bounds.size() == 3);

    CHECK(run(base + " --noise gaussian --method gaussian --norm 2 --out " +
              (dir.path / "g.json").string()) == 0);
}

TEST_CASE("certify exit codes") {
    TempDir dir;
    const Network net = linear_network(Matrix::Identity(2, 2), Vector::Zero(2));
    write(dir.path / "model.json", serialize_network(net));
    write(dir.path / "tie.json", R"({"x0": [0.5, 0.5]})");
    write(dir.path / "ok.json", R"({"x0": [0.9, 0.1]})");
    write(dir.path / "broken.json", R"({"x0": [0.9,)");
    write(dir.path / "bad_model.json", R"({"layers": []})");
    const std::string model = " --model " + (dir.path / "model.json").string();
    const std::string out = " --out " + (dir.path / "r.json").string();

    CHECK(run(model + " --input " + (dir.path / "ok.json").string() + out) == 0);
    CHECK(run(model + " --input " + (dir.path / "ok.json").string() + " --input " +
              (dir.path / "tie.json").string() + out) == 2);
    const auto doc = nlohmann::json::parse(slurp(dir.path / "r.json"));
    CHECK(doc["inputs"][1]["status"] == "error");
    CHECK(run(model + " --input " + (dir.path / "broken.json").string() + out) == 2);
    CHECK(run(" --model " + (dir.path / "bad_model.json").string() + " --input " +
              (dir.path / "ok.json").string() + out) == 1);
    CHECK(run(model + " --input " + (dir.path / "ok.json").string() + " --method gaussian" + out) == 1);
    CHECK(run(model + " --input " + (dir.path / "ok.json").string() + " --confidences 1.5" + out) == 1);
    CHECK(run(model) == 1);
    CHECK(run("--input x.json") != 0);
}
