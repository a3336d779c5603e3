#include "sqj/cli.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <ostream>
#include <sstream>

#include "sqj/check.hpp"
#include "sqj/demo.hpp"
#include "sqj/dse.hpp"
#include "sqj/io.hpp"
#include "sqj/resources.hpp"
#include "sqj/runtime.hpp"
#include "sqj/transforms.hpp"

namespace sqj {

namespace fs = std::filesystem;

namespace {

std::string fixed(double v, int digits) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

// Signals a check failure out of a subcommand.
struct CheckFailed {};

struct Args {
    std::string net;
    std::string params;
    std::vector<std::string> inputs;
    std::string engine = "accel";
    std::uint64_t seed = 1;
    int trials = 100;
    double clock_mhz = 100.0;
    std::string budget;
    std::string out;
    int par_fact = 16;
    int chi_num = 16;
    std::string model_params;
    std::string grid = "par_fact=8,16,32;chi_num=8,16";
    std::vector<std::string> nets;
    std::string demo = "mini-squeezenet";
    std::string fault;
    int top = 5;
    bool parallel = false;
};

AccelConfig accel_config(const Args& a) {
    AccelConfig cfg;
    cfg.par_fact = a.par_fact;
    cfg.chi_num = a.chi_num;
    cfg.validate();
    return cfg;
}

NetworkGraph load_net(const std::string& path) { return load_network(read_text(path)); }

DeviceBudget resolve_budget(std::string spec) {
    if (spec.empty()) {
        const char* env = std::getenv(kBudgetEnv);
        spec = env && *env ? env : "xc7z020";
    }
    if (auto b = builtin_budget(spec)) return *b;
    if (!fs::exists(spec)) throw std::invalid_argument("budget '" + spec + "' is neither a device nor a file");
    return parse_budget(read_text(spec));
}

ModelParams model_params(const Args& a) {
    return a.model_params.empty() ? ModelParams{} : parse_model_params(read_text(a.model_params));
}

void emit(const Args& a, const std::string& text, std::ostream& out) {
    if (a.out.empty()) {
        out << text;
    } else {
        write_text(a.out, text);
    }
}

// ---- subcommands -----------------------------------------------------------

void cmd_quantize(const Args& a, std::ostream& out) {
    if (a.inputs.empty()) throw std::invalid_argument("quantize needs at least one --input sample");
    if (a.out.empty()) throw std::invalid_argument("quantize needs --out <prefix>");
    const NetworkGraph g = load_net(a.net);
    const RParamSet real = load_real_params(read_file(a.params), g);
    std::vector<RMap> samples;
    for (const auto& p : a.inputs) samples.push_back(read_rtensor(read_file(p), g.input_shape()));
    const QuantizedNet q = quantize_network(g, real, samples);
    write_text(a.out + ".cfg", write_network(q.graph));
    const Bytes bytes = save_params(q.params);
    write_file(a.out + ".sqj2", bytes);
    out << scheme_table(q.graph, q.scheme);
}

void cmd_transform(const Args& a, std::ostream& out) {
    if (a.out.empty()) throw std::invalid_argument("transform needs --out <prefix>");
    const AccelConfig cfg = accel_config(a);
    const NetworkGraph g = load_net(a.net);
    std::vector<std::string> log;
    const NetworkGraph moved = reorder_maxpool_before_concat(g, &log);

    std::string params_text;
    NetworkGraph mapped;
    if (a.params.empty()) {
        mapped = reshape_first_layers(moved, cfg.chi_num, &log);
    } else {
        const Bytes bytes = read_file(a.params);
        if (param_version(bytes) == kParamVersionReal) {
            auto r = reshape_first_layers(moved, load_real_params(bytes, g), cfg.chi_num);
            mapped = r.graph;
            log.insert(log.end(), r.log.begin(), r.log.end());
            write_file(a.out + ".sqj2", save_params(r.params));
        } else {
            auto r = reshape_first_layers(moved, load_params(bytes, g), cfg.chi_num);
            mapped = r.graph;
            log.insert(log.end(), r.log.begin(), r.log.end());
            write_file(a.out + ".sqj2", save_params(r.params));
        }
    }
    write_text(a.out + ".cfg", write_network(mapped));

    for (const auto& n : mapped.nodes()) {
        if (n.kind != LayerKind::Conv) continue;
        ConvInvocation inv;
        inv.spec = mapped.conv_spec(n);
        if (capacity_violations(inv, cfg).empty()) continue;
        const PartitionPlan plan = partition_output_channels(inv, cfg);
        std::string ranges;
        for (const auto& r : plan.ranges) {
            ranges += (ranges.empty() ? "" : " ") + std::string("[") + std::to_string(r.begin) +
                      "," + std::to_string(r.end) + ")";
        }
        log.push_back(n.name + ": " + std::to_string(plan.ranges.size()) +
                      " invocations over output channels " + ranges);
    }
    for (const auto& line : log) out << line << '\n';
}

void cmd_run(const Args& a, std::ostream& out) {
    const auto engine = parse_engine(a.engine);
    if (!engine) throw std::invalid_argument("unknown engine '" + a.engine + "'");
    if (a.inputs.size() != 1) throw std::invalid_argument("run needs exactly one --input");
    const NetworkGraph g = load_net(a.net);
    const Bytes pbytes = read_file(a.params);
    const AnyMap input = read_tensor(read_file(a.inputs.front()));

    std::vector<double> scores;
    Bytes result;
    if (*engine == Engine::RefFloat) {
        const RParamSet params = load_real_params(pbytes, g);
        const RMap* in = std::get_if<RMap>(&input);
        const RMap converted = in ? RMap{} : dequantize_map(std::get<QMap>(input));
        const auto f = forward_real(g, params, in ? *in : converted, a.parallel);
        scores = f.probs.empty() ? std::vector<double>(f.logits.data().begin(), f.logits.data().end())
                                 : f.probs;
        result = write_tensor(f.logits);
    } else {
        const QParamSet params = load_params(pbytes, g);
        if (!g.input_fl()) throw NetworkError("network has no input FL; quantize it first");
        const QMap in = std::holds_alternative<QMap>(input)
                            ? std::get<QMap>(input)
                            : quantize_map(std::get<RMap>(input), {8, *g.input_fl()});
        RunOptions opts;
        opts.accel = accel_config(a);
        opts.parallel = a.parallel;
        const auto f = *engine == Engine::Accel ? forward_accel(g, params, in, opts)
                                                : forward_fixed(g, params, in, a.parallel);
        if (f.probs.empty()) {
            for (auto c : f.logits.data()) scores.push_back(dequantize(c, f.logits.fmt()));
        } else {
            scores = f.probs;
        }
        result = write_tensor(f.logits);
    }
    if (!a.out.empty()) write_file(a.out, result);
    out << "engine " << a.engine << '\n';
    for (int idx : top_k(scores, a.top)) {
        out << idx << ' ' << fixed(scores[static_cast<std::size_t>(idx)], 6) << '\n';
    }
}

void cmd_check(const Args& a, std::ostream& out) {
    NetworkGraph g;
    QParamSet params;
    if (a.net.empty()) {
        DemoBundle d = make_demo(a.demo, a.seed);
        g = d.quantized.graph;
        params = d.quantized.params;
    } else {
        g = load_net(a.net);
        params = load_params(read_file(a.params), g);
    }
    CheckOptions opt;
    opt.trials = a.trials;
    opt.seed = a.seed;
    opt.run.accel = accel_config(a);
    opt.run.parallel = a.parallel;
    if (!a.fault.empty()) {
        const auto colon = a.fault.rfind(':');
        WeightFault f;
        f.layer = a.fault.substr(0, colon);
        f.channel = colon == std::string::npos ? 0 : std::stoi(a.fault.substr(colon + 1));
        if (!g.find(f.layer)) throw std::invalid_argument("fault layer '" + f.layer + "' not in network");
        opt.run.fault = f;
    }
    const CheckReport rep = run_checks(g, params, opt);
    emit(a, rep.text(), out);
    if (!rep.passed()) throw CheckFailed{};
}

void cmd_profile(const Args& a, std::ostream& out) {
    const AccelConfig cfg = accel_config(a);
    const NetworkGraph g = map_for_accel(load_net(a.net), cfg.chi_num);
    const CycleReport r = network_latency(g, cfg, model_params(a), a.clock_mhz);
    emit(a, profile_csv(r), out);
}

void cmd_dse(const Args& a, std::ostream& out, std::ostream& err) {
    std::vector<NetworkGraph> graphs;
    for (const auto& p : a.nets) graphs.push_back(load_net(p));
    if (graphs.empty()) throw std::invalid_argument("dse needs at least one --net");
    const DseResult r = dse(parse_grid(a.grid), resolve_budget(a.budget), graphs, model_params(a));
    emit(a, dse_csv(r), out);
    if (r.feasible().empty()) {
        err << "no feasible design point in the grid\n";
        throw CheckFailed{};
    }
}

void cmd_demo(const Args& a, std::ostream& out) {
    const fs::path dir = a.out.empty() ? fs::path(".") : fs::path(a.out);
    fs::create_directories(dir);
    for (const auto& name : demo_names()) {
        const DemoBundle d = make_demo(name, a.seed);
        write_text(dir / (name + "_real.cfg"), write_network(d.graph));
        write_file(dir / (name + "_real.sqj2"), save_params(d.real));
        write_text(dir / (name + ".cfg"), write_network(d.quantized.graph));
        write_file(dir / (name + ".sqj2"), save_params(d.quantized.params));
        for (std::size_t i = 0; i < d.samples.size(); ++i) {
            write_file(dir / (name + "_sample" + std::to_string(i) + ".sqt"), write_tensor(d.samples[i]));
        }
        out << "wrote " << name << " (" << d.samples.size() << " samples)\n";
    }
    write_text(dir / "squeezenet_v1.1.cfg", write_network(squeezenet_v11()));
    out << "wrote squeezenet_v1.1.cfg\n";
}

}  // namespace

std::string profile_csv(const CycleReport& r) {
    std::ostringstream out;
    out << "# sqj2 profile v1 clock_mhz=" << fixed(r.clock_mhz, 2) << '\n';
    out << "layer,invocations,cycles_model,cycles_sim,pct_error,ms,cumulative_ms,kind\n";
    std::int64_t cumulative = 0;
    for (const auto& l : r.layers) {
        cumulative += l.cycles_model;
        const double err = l.cycles_sim == 0
                               ? 0.0
                               : 100.0 * static_cast<double>(l.cycles_model - l.cycles_sim) /
                                     static_cast<double>(l.cycles_sim);
        out << l.name << ',' << l.invocations << ',' << l.cycles_model << ',' << l.cycles_sim
            << ',' << fixed(err, 2) << ',' << fixed(CycleReport::cycles_to_ms(l.cycles_model, r.clock_mhz), 4)
            << ',' << fixed(CycleReport::cycles_to_ms(cumulative, r.clock_mhz), 4) << ',' << l.kind
            << '\n';
    }
    out << "# total_cycles=" << r.total_cycles() << " total_ms=" << format_centi(r.ms())
        << " fps=" << format_centi(r.fps()) << '\n';
    return out.str();
}

std::string scheme_table(const NetworkGraph& g, const QuantScheme& s) {
    std::ostringstream out;
    out << "node kind fl_in fl_out fl_w fl_b\n";
    out << kGraphInput << " input - " << s.input_fl << " - -\n";
    for (const auto& n : g.nodes()) {
        const auto& f = s.nodes.at(n.name);
        out << n.name << ' ' << kind_name(n.kind) << ' ' << f.fl_in << ' ';
        out << (n.kind == LayerKind::Softmax ? "-" : std::to_string(f.fl_out)) << ' ';
        out << (f.fl_w ? std::to_string(*f.fl_w) : "-") << ' ';
        out << (f.fl_b ? std::to_string(*f.fl_b) : "-") << '\n';
    }
    return out.str();
}

int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    Args a;
    CLI::App app{"sqj2: fixed-point CNN accelerator model"};
    app.require_subcommand(1);

    auto net_opts = [&a](CLI::App* sub, bool params_required) {
        sub->add_option("--net", a.net, "network config")->required();
        auto* p = sub->add_option("--params", a.params, "SQJ2 parameter file");
        if (params_required) p->required();
    };
    auto accel_opts = [&a](CLI::App* sub) {
        sub->add_option("--par-fact", a.par_fact, "processing elements")->capture_default_str();
        sub->add_option("--chi-num", a.chi_num, "MACs per PE per cycle")->capture_default_str();
    };

    auto* quantize = app.add_subcommand("quantize", "calibrate FLs from sample inputs");
    net_opts(quantize, true);
    quantize->add_option("--input", a.inputs, "SQT0 sample tensors (real)")->required();
    quantize->add_option("--out", a.out, "output prefix: <out>.cfg and <out>.sqj2")->required();

    auto* transform = app.add_subcommand("transform", "reorder pools, reshape first layers, plan partitions");
    net_opts(transform, false);
    accel_opts(transform);
    transform->add_option("--out", a.out, "output prefix: <out>.cfg and <out>.sqj2")->required();

    auto* run = app.add_subcommand("run", "forward pass on one input");
    net_opts(run, true);
    accel_opts(run);
    run->add_option("--input", a.inputs, "SQT0 input tensor")->required();
    run->add_option("--engine", a.engine, "ref-float | ref-fixed | accel")->capture_default_str();
    run->add_option("--out", a.out, "write the output tensor here");
    run->add_option("--top", a.top, "entries to list")->capture_default_str();
    run->add_flag("--parallel", a.parallel, "OpenMP kernels");

    auto* check = app.add_subcommand("check", "randomized oracle suites");
    check->add_option("--net", a.net, "quantized network config (default: a bundled demo net)");
    check->add_option("--params", a.params, "SQJ2 parameter file")->needs(check->get_option("--net"));
    check->get_option("--net")->needs(check->get_option("--params"));
    check->add_option("--demo", a.demo, "bundled net when --net is absent")->capture_default_str();
    check->add_option("--trials", a.trials, "trials per randomized suite")->capture_default_str();
    check->add_option("--seed", a.seed, "random seed")->capture_default_str();
    check->add_option("--fault", a.fault, "corrupt weights of LAYER[:CHANNEL] in the accelerator");
    check->add_option("--out", a.out, "write the report here");
    check->add_flag("--parallel", a.parallel, "OpenMP kernels and partitions");
    accel_opts(check);

    auto* profile = app.add_subcommand("profile", "per-layer latency CSV");
    profile->add_option("--net", a.net, "network config")->required();
    accel_opts(profile);
    profile->add_option("--clock-mhz", a.clock_mhz, "accelerator clock")->capture_default_str();
    profile->add_option("--model-params", a.model_params, "key=value cost constants");
    profile->add_option("--out", a.out, "write the CSV here");

    auto* dse_cmd = app.add_subcommand("dse", "design-space exploration, Pareto CSV");
    dse_cmd->add_option("--net", a.nets, "network configs")->required();
    dse_cmd->add_option("--grid", a.grid, "par_fact=..;chi_num=..;dsp_share=..;weight_cap=..")
        ->capture_default_str();
    dse_cmd->add_option("--budget", a.budget,
                        std::string("device name or key=value file (default: $") + kBudgetEnv +
                            " or xc7z020)");
    dse_cmd->add_option("--model-params", a.model_params, "key=value cost constants");
    dse_cmd->add_option("--out", a.out, "write the CSV here");

    auto* demo = app.add_subcommand("demo", "write the bundled networks, weights and samples");
    demo->add_option("--seed", a.seed, "weight seed")->capture_default_str();
    demo->add_option("--out", a.out, "output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (*quantize) cmd_quantize(a, out);
        else if (*transform) cmd_transform(a, out);
        else if (*run) cmd_run(a, out);
        else if (*check) cmd_check(a, out);
        else if (*profile) cmd_profile(a, out);
        else if (*dse_cmd) cmd_dse(a, out, err);
        else if (*demo) cmd_demo(a, out);
    } catch (const CheckFailed&) {
        return kExitCheckFailed;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitUsage;
    }
    return kExitOk;
}

}  // namespace sqj
