#include <doctest.h>

#include <string>

#include "helpers.hpp"
#include "sqj/demo.hpp"
#include "sqj/reference.hpp"
#include "sqj/runtime.hpp"
#include "sqj/transforms.hpp"

using namespace sqj;
using namespace sqj::testing;

namespace {

bool contains(const std::vector<std::string>& log, const std::string& s) {
    for (const auto& l : log)
        if (l.find(s) != std::string::npos) return true;
    return false;
}

}  // namespace

TEST_CASE("reshaped channel count") {
    CHECK(reshaped_channels(3, 3, 16) == 32);
    CHECK(reshaped_channels(3, 1, 16) == 16);
    CHECK(reshaped_channels(1, 3, 16) == 16);
    CHECK(reshaped_channels(3, 3, 1) == 27);
    for (int k = 1; k <= 7; ++k)
        for (int c = 1; c <= 8; ++c)
            for (int n : {1, 4, 16, 32}) {
                const int r = reshaped_channels(k, c, n);
                CHECK(r % n == 0);
                CHECK(r >= k * k * c);
                CHECK(r - n < k * k * c);
            }
}

TEST_CASE("first-layer reshape instance") {
    Rng rng(1);
    ConvSpec s{227, 227, 3, 3, 2, 0, 64};
    s.use_relu = true;
    const auto blob = random_qblob(rng, s, {8, 7}, {8, 9});
    const auto r = reshape_first_layer(s, blob, 16);
    REQUIRE(r);
    CHECK(r->spec.in_shape() == Shape{113, 113, 32});
    CHECK(r->spec.kernel == 1);
    CHECK(r->spec.stride == 1);
    CHECK(r->spec.pad == 0);
    CHECK(r->spec.ch_out == 64);
    CHECK(r->blob.ci == 32);
    CHECK(r->blob.k == 1);
    // MAC count grows only by the zero padding.
    CHECK(r->spec.weight_count() * 113 * 113 >= s.weight_count() * 113 * 113);

    const auto in = random_qmap(rng, s.in_shape(), {8, 5});
    const auto rewritten = r->rewriter(in);
    CHECK(rewritten.shape() == Shape{113, 113, 32});
    CHECK(rewritten.fmt() == in.fmt());
    // Channel (kh*K + kw)*CHI + ci of pixel (ho, wo) is the original receptive field entry.
    for (int t = 0; t < 200; ++t) {
        const int ho = rng.range(0, 112), wo = rng.range(0, 112);
        const int kh = rng.range(0, 2), kw = rng.range(0, 2), ci = rng.range(0, 2);
        REQUIRE(rewritten.at(ho, wo, (kh * 3 + kw) * 3 + ci) == in.at(ho * 2 + kh, wo * 2 + kw, ci));
        REQUIRE(rewritten.at(ho, wo, 27 + rng.range(0, 4)) == 0);
    }
    CHECK(ref::conv(rewritten, r->spec, r->blob, {8, 4}) == ref::conv(in, s, blob, {8, 4}));
}

TEST_CASE("reshape is bit-exact on random padded layers") {
    Rng rng(2);
    for (int t = 0; t < 40; ++t) {
        ConvSpec s{rng.range(3, 15), rng.range(3, 15), rng.range(1, 4), rng.range(1, 5),
                   rng.range(1, 3), rng.range(0, 2), rng.range(1, 12)};
        if (s.h_out() < 1 || s.w_out() < 1) continue;
        s.use_relu = rng.coin();
        const int n = rng.pick(std::vector{4, 8, 16});
        if (s.ch_in >= n) continue;
        const auto blob = random_qblob(rng, s, {8, 6}, {8, 8});
        const auto in = random_qmap(rng, s.in_shape(), {8, 4});
        const auto r = reshape_first_layer(s, blob, n);
        REQUIRE(r);
        const auto out = ref::conv(r->rewriter(in), r->spec, r->blob, {8, 5});
        REQUIRE(out == ref::conv(in, s, blob, {8, 5}));
    }
}

TEST_CASE("reshape is a no-op for wide inputs") {
    Rng rng(3);
    const ConvSpec s{8, 8, 16, 3, 1, 1, 8};
    std::string warning;
    CHECK_FALSE(reshape_first_layer(s, random_qblob(rng, s, {8, 7}, {8, 7}), 16, &warning));
    CHECK(warning.find("16") != std::string::npos);
}

TEST_CASE("graph reshape preserves the forward output") {
    for (const auto& name : demo_names()) {
        const auto d = make_demo(name, 5, 2);
        const auto& q = d.quantized;
        const auto rw = reshape_first_layers(q.graph, q.params, 16);
        CHECK(contains(rw.log, "conv1: reshaped"));
        CHECK(rw.graph.node("conv1").kernel == 1);
        const auto& reshape = rw.graph.nodes().front();
        CHECK(reshape.kind == LayerKind::Reshape);
        for (const auto& x : d.samples) {
            const auto qx = quantize_map(x, {8, *q.graph.input_fl()});
            CHECK(forward_fixed(rw.graph, rw.params, qx).logits ==
                  forward_fixed(q.graph, q.params, qx).logits);
        }
        // Graph-only variant agrees on structure.
        CHECK(write_network(reshape_first_layers(q.graph, 16)) == write_network(rw.graph));
    }
    // Nothing to rewrite: params come back unchanged.
    const auto d = make_demo("mini-squeezenet", 5, 1);
    const auto same = reshape_first_layers(d.quantized.graph, d.quantized.params, 2);
    CHECK(same.params == d.quantized.params);
    CHECK(write_network(same.graph) == write_network(d.quantized.graph));
}

TEST_CASE("maxpool reorder") {
    const auto sq = squeezenet_v11();
    std::vector<std::string> log;
    const auto r = reorder_maxpool_before_concat(sq, &log);
    CHECK(log.size() == 2);
    for (const auto* pool : {"pool3", "pool5"}) {
        const auto& n = r.node(pool);
        CHECK(n.kind == LayerKind::Concat);
        REQUIRE(n.inputs.size() == 2);
        for (const auto& in : n.inputs) {
            const auto& p = r.node(in);
            CHECK(p.kind == LayerKind::MaxPool);
            CHECK(r.node(p.inputs[0]).kind == LayerKind::Conv);
        }
        CHECK(n.out_shape == sq.node(pool).out_shape);
    }
    // Every pool now fuses into its producer conv.
    for (const auto& s : plan_accel_steps(r)) CHECK(s.kind != StepKind::StandalonePool);
    CHECK(r.output().out_shape == sq.output().out_shape);

    // Already reordered: identity.
    CHECK(write_network(reorder_maxpool_before_concat(r)) == write_network(r));

    const auto d = make_demo("mini-squeezenet", 9, 2);
    const auto& q = d.quantized;
    const auto rq = reorder_maxpool_before_concat(q.graph);
    for (const auto& x : d.samples) {
        const auto qx = quantize_map(x, {8, *q.graph.input_fl()});
        CHECK(forward_fixed(rq, q.params, qx).logits == forward_fixed(q.graph, q.params, qx).logits);
    }
}

TEST_CASE("output-channel partitioning") {
    Rng rng(4);
    AccelConfig cfg;
    ConvInvocation inv;
    inv.spec = {4, 4, 64, 1, 1, 0, 512};
    cfg.par_fact = 16;
    cfg.q_cho_max = 16;  // 256 channels per invocation
    const auto plan = partition_output_channels(inv, cfg);
    CHECK(plan.capacity_channels == 256);
    CHECK(plan.ranges == std::vector<ChannelRange>{{0, 256}, {256, 512}});

    inv.spec.ch_out = 100;
    CHECK_FALSE(partition_output_channels(inv, cfg).partitioned());

    for (int t = 0; t < 50; ++t) {
        AccelConfig c;
        c.par_fact = rng.pick(std::vector{1, 2, 4});
        c.q_cho_max = rng.range(1, 8);
        ConvSpec s{rng.range(2, 9), rng.range(2, 9), rng.range(1, 12), rng.pick(std::vector{1, 3}),
                   1, 1, rng.range(1, 60)};
        s.use_relu = rng.coin();
        const auto blob = random_qblob(rng, s, {8, 7}, {8, 9});
        const auto in = random_qmap(rng, s.in_shape(), {8, 4});
        const auto v = make_invocation(s, blob, {8, 4}, {8, 5});
        const auto p = partition_output_channels(v, c);
        // Cover CHO exactly once, minimal count, each part fits.
        int next = 0;
        for (const auto& r : p.ranges) {
            REQUIRE(r.begin == next);
            REQUIRE(r.size() >= 1);
            REQUIRE(capacity_violations(sub_invocation(v, r), c).empty());
            next = r.end;
        }
        REQUIRE(next == s.ch_out);
        REQUIRE(static_cast<int>(p.ranges.size()) == ceil_div(s.ch_out, p.capacity_channels));

        std::vector<QMap> parts;
        for (const auto& r : p.ranges) {
            const auto sb = slice_blob(blob, r);
            parts.push_back(accel_conv(sub_invocation(v, r), in, partition_weights(sb, c), c));
        }
        REQUIRE(merge_partials(parts) == ref::conv(in, s, blob, {8, 5}));
    }

    AccelConfig tiny;
    tiny.q_choxkxkxchi_max = 8;
    inv.spec = {4, 4, 4, 3, 1, 1, 8};
    CHECK_THROWS_AS(partition_output_channels(inv, tiny), CapacityError);
}

TEST_CASE("accel step plan") {
    const auto g = mini_squeezenet();
    const auto steps = plan_accel_steps(g);
    bool conv1_fused = false;
    for (const auto& s : steps) {
        if (s.node == "conv1") conv1_fused = s.pool == std::optional<std::string>("pool1");
        CHECK(s.node != "pool1");
    }
    CHECK(conv1_fused);
    const auto mapped = map_for_accel(g, 16);
    CHECK(mapped.nodes().front().kind == LayerKind::Reshape);
    for (const auto& s : plan_accel_steps(mapped)) CHECK(s.kind != StepKind::StandalonePool);
}
