#include <doctest.h>

#include <string>

#include "sqj/check.hpp"
#include "sqj/demo.hpp"
#include "sqj/perf.hpp"

using namespace sqj;

namespace {

ConvInvocation geometry(ConvSpec s) {
    ConvInvocation inv;
    inv.spec = s;
    return inv;
}

std::int64_t sum_parts(const LatencyBreakdown& b) {
    return b.overhead + b.precalc + b.init_caches + b.shift + b.init_win + b.dataflow +
           b.pixel_loop + b.leftover + b.row_tail + b.drain + b.pool;
}

}  // namespace

TEST_CASE("pipelined loop cost") {
    static_assert(loop_cc(100, 1, 7) == 107);
    static_assert(loop_cc(0, 1, 7) == 7);
    static_assert(loop_cc(1, 1, 0) == 1);
    CHECK(ModelParams::kInitiationInterval == 1);
}

TEST_CASE("per-pixel MAC cycles") {
    static_assert(cco_cc(64, 1, 32, 16, 16, 5, 3) == 16);
    static_assert(cco_cc(64, 3, 3, 16, 16, 0, 0) == 36);
    // Divisible dims reduce to CHO*K*K*CHI / (PF*CN).
    for (int pf : {1, 2, 4, 8, 16})
        for (int cn : {1, 2, 4, 8, 16})
            for (int k : {1, 3, 5}) {
                const int cho = pf * 3, chi = cn * 5;
                CHECK(cco_cc(cho, k, chi, pf, cn, 2, 1) ==
                      static_cast<std::int64_t>(cho) * k * k * chi / (pf * cn) + 3);
            }
    CHECK(cco_work(5, 3, 17, 4, 16) == 2 * 9 * 2);
}

TEST_CASE("stage costs feed the row body") {
    // One output row of two pixels with stage costs {10, 6, 4}.
    auto p = ModelParams::zero();
    p.pipe_cco_fill = 9;
    p.update_iter_lat = 5;
    p.write_back_over = 1;
    p.write_back_iter_lat = 2;
    AccelConfig cfg;
    cfg.par_fact = 16;
    cfg.chi_num = 1;
    const auto inv = geometry({1, 2, 1, 1, 1, 0, 10});
    const auto c = stage_costs(inv, cfg, p);
    CHECK(c.cco == 10);
    CHECK(c.update_win == 6);
    CHECK(c.write_back == 4);
    CHECK(c.iteration() == 10);
    for (const auto& b : {invocation_latency(inv, cfg, p), simulate_invocation(inv, cfg, p)}) {
        CHECK(b.pixel_loop + b.leftover == 24);
    }

    // Unit stage costs: w_out + 1 per row.
    auto z = ModelParams::zero();
    AccelConfig one;
    one.par_fact = 1;
    one.chi_num = 1;
    const auto row = geometry({1, 7, 1, 1, 1, 0, 1});
    const auto u = stage_costs(row, one, z);
    CHECK(u.cco == 1);
    CHECK(u.update_win == 1);
    CHECK(u.write_back == 1);
    const auto b = simulate_invocation(row, one, z);
    CHECK(b.pixel_loop + b.leftover == 8);
}

TEST_CASE("zeroed params leave only work and data movement") {
    auto z = ModelParams::zero();
    z.init_caches_cc = 1;  // keep the parameter load visible
    AccelConfig cfg;
    for (ConvSpec s : {ConvSpec{9, 7, 40, 1, 1, 0, 50}, ConvSpec{4, 4, 3, 1, 1, 0, 1}}) {
        const auto inv = geometry(s);
        const auto b = layer_latency(inv, cfg, z);
        CHECK(b.pixel_loop == static_cast<std::int64_t>(s.h_out()) * s.w_out() *
                                  cco_work(s.ch_out, 1, s.ch_in, cfg.par_fact, cfg.chi_num));
        CHECK(b.init_caches == static_cast<std::int64_t>(s.ch_out) * s.ch_in + s.ch_out);
        CHECK(b.overhead == 0);
        CHECK(b.precalc == 0);
        CHECK(b.dataflow == 0);
        CHECK(b.pixel_work == b.pixel_loop);
    }
}

TEST_CASE("closed form equals the event simulator") {
    Rng rng(77);
    for (int t = 0; t < 1000; ++t) {
        const auto c = random_perf_case(rng);
        const auto model = layer_latency(c.inv, c.cfg, c.params);
        const auto sim = simulate_layer(c.inv, c.cfg, c.params);
        REQUIRE(model == sim);
        REQUIRE(model.total() == sum_parts(model));
    }
}

TEST_CASE("latency is monotone in par_fact and chi_num") {
    Rng rng(5);
    const ModelParams p;
    for (int t = 0; t < 300; ++t) {
        ConvSpec s{rng.range(3, 30), rng.range(3, 30), rng.range(1, 96), rng.pick(std::vector{1, 3}),
                   rng.range(1, 2), rng.range(0, 1), rng.range(1, 96)};
        const auto inv = geometry(s);
        AccelConfig a;
        a.par_fact = rng.pick(std::vector{1, 2, 4, 8, 16});
        a.chi_num = rng.pick(std::vector{1, 2, 4, 8, 16});
        a.q_cho_max = 1024;
        a.q_choxkxkxchi_max = 1 << 20;
        AccelConfig wider = a;
        wider.par_fact *= 2;
        REQUIRE(layer_latency(inv, wider, p).total() <= layer_latency(inv, a, p).total());
        AccelConfig deeper = a;
        deeper.chi_num *= 2;
        REQUIRE(layer_latency(inv, deeper, p).total() <= layer_latency(inv, a, p).total());
    }
}

TEST_CASE("partitions sum their invocations") {
    AccelConfig cfg;
    cfg.q_cho_max = 4;  // 64 channels per invocation at par_fact 16
    const auto inv = geometry({6, 6, 8, 3, 1, 1, 150});
    const auto b = layer_latency(inv, cfg, ModelParams{});
    CHECK(b.invocations == 3);
    CHECK(b.overhead == 3 * ModelParams{}.invocation_over);
    CHECK(b.hidden_bytes == 2 * 6 * 6 * 8);
    CHECK(b == simulate_layer(inv, cfg, ModelParams{}));
}

TEST_CASE("stand-alone pool") {
    const ModelParams p;
    const AccelConfig cfg;
    const Shape in{8, 6, 40};
    const auto b = pool_latency(in, {3, 2, 0}, cfg, p);
    CHECK(b.pool == p.pool_over + 8 * 6 * 3 + p.pool_iter_lat);
    CHECK(b.total() == b.pool + p.invocation_over);
    CHECK(b == simulate_pool(in, {3, 2, 0}, cfg, p));
}

TEST_CASE("network report") {
    const ModelParams p;
    const AccelConfig cfg;
    const auto one = load_network("c conv input 12 12 32 3 1 1 16 1 - - - -\n");
    const auto rep = network_latency(one, cfg, p, 100.0);
    REQUIRE(rep.layers.size() == 1);
    CHECK(rep.total_cycles() == layer_latency(geometry(one.conv_spec(one.node("c"))), cfg, p).total());
    CHECK(rep.total_cycles() == rep.total_sim_cycles());

    const auto sq = map_for_accel(squeezenet_v11(), cfg.chi_num);
    const auto r = network_latency(sq, cfg, p, 100.0);
    std::int64_t sum = 0;
    for (const auto& l : r.layers) {
        CHECK(l.cycles_model == l.cycles_sim);
        CHECK(l.cycles_model == l.breakdown.total());
        if (l.kind.rfind("cpu:", 0) == 0) CHECK(l.cycles_model == 0);
        sum += l.cycles_model;
    }
    CHECK(sum == r.total_cycles());
    CHECK(r.fps() == doctest::Approx(1000.0 / r.ms()));

    // A fused pool is free: conv+pool costs the same as the bare conv.
    for (const auto& l : r.layers) {
        if (l.kind != "conv+pool") continue;
        const auto& n = sq.node(l.name);
        CHECK(l.cycles_model == layer_latency(geometry(sq.conv_spec(n)), cfg, p).total());
    }
}

TEST_CASE("work conservation across a network") {
    const auto z = ModelParams::zero();
    const AccelConfig cfg;
    for (const auto& name : demo_names()) {
        const auto g = map_for_accel(demo_graph(name), cfg.chi_num);
        const auto r = network_latency(g, cfg, z, 100.0);
        std::int64_t pixel_loop = 0;
        for (const auto& l : r.layers) pixel_loop += l.breakdown.pixel_loop;
        std::int64_t expect = 0;
        for (const auto& n : g.nodes()) {
            if (n.kind != LayerKind::Conv) continue;
            const auto s = g.conv_spec(n);
            expect += static_cast<std::int64_t>(s.h_out()) * s.w_out() * ceil_div(s.ch_out, 16) *
                      s.kernel * s.kernel * ceil_div(s.ch_in, 16);
        }
        CHECK(pixel_loop == expect);
    }
}

TEST_CASE("unit conversion and two-decimal rendering") {
    CHECK(CycleReport::cycles_to_ms(7491000, 100.0) == doctest::Approx(74.91));
    CHECK(format_centi(CycleReport::cycles_to_ms(7491000, 100.0)) == "74.91");
    CHECK(format_centi(CycleReport::ms_to_fps(74.91)) == "13.34");
    CHECK(format_centi(0.0) == "0.00");
    CHECK(format_centi(2.5) == "2.50");
    CHECK(format_centi(-1.239) == "-1.23");
    CHECK_THROWS(CycleReport::cycles_to_ms(1, 0.0));
}

TEST_CASE("model params text") {
    ModelParams p;
    p.cco_over = 11;
    p.invocation_over = 0;
    CHECK(parse_model_params(write_model_params(p)) == p);
    const auto q = parse_model_params("# tuned\nshift_over = 9\n\n");
    CHECK(q.shift_over == 9);
    CHECK(q.cco_over == ModelParams{}.cco_over);
    CHECK_THROWS(parse_model_params("nonsense=1\n"));
    CHECK_THROWS(parse_model_params("shift_over=-1\n"));
    CHECK_THROWS(parse_model_params("shift_over\n"));
}
