#include <doctest.h>

#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include "sqj/cli.hpp"
#include "sqj/io.hpp"

using namespace sqj;
namespace fs = std::filesystem;

namespace {

struct Result {
    int code;
    std::string out;
    std::string err;
};

Result cli(std::vector<std::string> args) {
    args.insert(args.begin(), "sqj2");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int code = cli_main(static_cast<int>(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

// One demo directory shared by the cases below.
const fs::path& demo_dir() {
    static const fs::path dir = [] {
        const auto d = fs::temp_directory_path() / "sqj_cli_test";
        fs::remove_all(d);
        REQUIRE(cli({"demo", "--seed", "3", "--out", d.string()}).code == kExitOk);
        return d;
    }();
    return dir;
}

std::string at(const std::string& name) { return (demo_dir() / name).string(); }

}  // namespace

TEST_CASE("help and usage errors") {
    CHECK(cli({"--help"}).code == kExitOk);
    CHECK(cli({"bogus"}).code == kExitUsage);
    CHECK(cli({"profile"}).code == kExitUsage);
    CHECK(cli({"run", "--net", "x.cfg", "--params", "x.sqj2", "--input", "x.sqt", "--engine", "gpu"}).code ==
          kExitUsage);
    const auto missing = cli({"profile", "--net", "/nonexistent/net.cfg"});
    CHECK(missing.code == kExitUsage);
    CHECK(missing.err.find("error:") == 0);
}

TEST_CASE("demo writes the bundle") {
    for (const char* f : {"mini-squeezenet.cfg", "mini-squeezenet.sqj2", "mini-squeezenet_real.cfg",
                          "mini-squeezenet_real.sqj2", "mini-squeezenet_sample0.sqt",
                          "mini-zynqnet.cfg", "squeezenet_v1.1.cfg"})
        CHECK(fs::exists(demo_dir() / f));
}

TEST_CASE("quantize fills formats and is idempotent") {
    std::vector<std::string> args{"quantize", "--net", at("mini-squeezenet_real.cfg"), "--params",
                                  at("mini-squeezenet_real.sqj2"), "--input",
                                  at("mini-squeezenet_sample0.sqt"), at("mini-squeezenet_sample1.sqt"),
                                  "--out", at("q")};
    const auto first = cli(args);
    REQUIRE(first.code == kExitOk);
    CHECK(first.out.find("conv1") != std::string::npos);
    const auto cfg = read_text(at("q.cfg"));
    const auto params = read_file(at("q.sqj2"));
    CHECK(load_network(cfg).quantized());
    CHECK(cli(args).out == first.out);
    CHECK(read_text(at("q.cfg")) == cfg);
    CHECK(read_file(at("q.sqj2")) == params);

    args[4] = at("missing.sqj2");
    CHECK(cli(args).code == kExitUsage);
}

TEST_CASE("transform reshapes conv1") {
    const auto r = cli({"transform", "--net", at("mini-squeezenet.cfg"), "--params",
                        at("mini-squeezenet.sqj2"), "--out", at("t")});
    REQUIRE(r.code == kExitOk);
    CHECK(r.out.find("conv1: reshaped") != std::string::npos);
    const auto g = load_network(read_text(at("t.cfg")));
    CHECK(g.node("conv1").kernel == 1);
    CHECK(load_params(read_file(at("t.sqj2")), g).at("conv1").ci == 32);

    // Nothing to reshape or reorder: parameters come back byte-identical.
    const auto z = cli({"transform", "--net", at("mini-zynqnet.cfg"), "--params",
                        at("mini-zynqnet.sqj2"), "--chi-num", "2", "--out", at("z")});
    REQUIRE(z.code == kExitOk);
    CHECK(read_file(at("z.sqj2")) == read_file(at("mini-zynqnet.sqj2")));
}

TEST_CASE("run engines agree") {
    auto run = [](const std::string& net, const std::string& params, const std::string& engine) {
        const auto out = at("out_" + engine + ".sqt");
        const auto r = cli({"run", "--net", net, "--params", params, "--input",
                            at("mini-squeezenet_sample2.sqt"), "--engine", engine, "--out", out});
        REQUIRE(r.code == kExitOk);
        CHECK(r.out.rfind("engine " + engine + "\n", 0) == 0);
        return read_file(out);
    };
    const auto fixed = run(at("mini-squeezenet.cfg"), at("mini-squeezenet.sqj2"), "ref-fixed");
    CHECK(run(at("mini-squeezenet.cfg"), at("mini-squeezenet.sqj2"), "accel") == fixed);
    // The transformed net on the accelerator gives the same logits.
    cli({"transform", "--net", at("mini-squeezenet.cfg"), "--params", at("mini-squeezenet.sqj2"),
         "--out", at("t")});
    CHECK(run(at("t.cfg"), at("t.sqj2"), "accel") == fixed);
    const auto real = run(at("mini-squeezenet_real.cfg"), at("mini-squeezenet_real.sqj2"), "ref-float");
    CHECK(std::holds_alternative<RMap>(read_tensor(real)));
}

TEST_CASE("check exit codes and determinism") {
    const std::vector<std::string> base{"check", "--net", at("mini-squeezenet.cfg"), "--params",
                                        at("mini-squeezenet.sqj2"), "--trials", "10", "--seed", "4"};
    const auto a = cli(base);
    CHECK(a.code == kExitOk);
    CHECK(a.out.find("result PASS") != std::string::npos);
    CHECK(cli(base).out == a.out);

    auto faulty = base;
    faulty.insert(faulty.end(), {"--fault", "fire3_expand3x3:2"});
    const auto f = cli(faulty);
    CHECK(f.code == kExitCheckFailed);
    CHECK(f.out.find("FAIL layer fire3_expand3x3") != std::string::npos);

    auto unknown = base;
    unknown.insert(unknown.end(), {"--fault", "nope"});
    CHECK(cli(unknown).code == kExitUsage);

    CHECK(cli({"check", "--demo", "mini-zynqnet", "--trials", "5"}).code == kExitOk);
}

TEST_CASE("profile CSV") {
    const auto a = cli({"profile", "--net", at("squeezenet_v1.1.cfg")});
    REQUIRE(a.code == kExitOk);
    CHECK(cli({"profile", "--net", at("squeezenet_v1.1.cfg")}).out == a.out);
    std::istringstream lines(a.out);
    std::string line;
    std::getline(lines, line);
    CHECK(line == "# sqj2 profile v1 clock_mhz=100.00");
    std::getline(lines, line);
    CHECK(line == "layer,invocations,cycles_model,cycles_sim,pct_error,ms,cumulative_ms,kind");
    int rows = 0;
    while (std::getline(lines, line)) {
        if (line.rfind("#", 0) == 0) {
            CHECK(line.find("# total_cycles=") == 0);
            continue;
        }
        ++rows;
        CHECK(line.find(",0.00,") != std::string::npos);  // pct_error column
    }
    CHECK(rows > 20);

    const auto params = at("zero.params");
    write_text(params, "invocation_over=0\n");
    const auto b = cli({"profile", "--net", at("squeezenet_v1.1.cfg"), "--model-params", params,
                        "--clock-mhz", "200"});
    CHECK(b.code == kExitOk);
    CHECK(b.out.find("clock_mhz=200.00") != std::string::npos);
}

TEST_CASE("dse CSV and budgets") {
    const auto a = cli({"dse", "--net", at("mini-squeezenet.cfg"), at("mini-zynqnet.cfg"), "--grid",
                        "par_fact=8,16;chi_num=8,16"});
    REQUIRE(a.code == kExitOk);
    CHECK(a.out.rfind("# sqj2 dse v1\n", 0) == 0);

    const auto tiny = at("tiny.budget");
    write_text(tiny, "lut=100\nff=100\nbram_36k=1\ndsp=1\n");
    CHECK(cli({"dse", "--net", at("mini-squeezenet.cfg"), "--budget", tiny}).code == kExitCheckFailed);
    CHECK(cli({"dse", "--net", at("mini-squeezenet.cfg"), "--budget", "nowhere"}).code == kExitUsage);
    CHECK(cli({"dse", "--net", at("mini-squeezenet.cfg"), "--grid", "par_fact=0"}).code == kExitUsage);
}
