// Serial reference vs OpenMP kernels vs the accelerator model on
// SqueezeNet-sized layers.

#include <benchmark/benchmark.h>

#include "sqj/accel.hpp"
#include "sqj/kernels.hpp"
#include "sqj/random.hpp"
#include "sqj/reference.hpp"

using namespace sqj;

namespace {

struct Layer {
    ConvSpec spec;
    QBlob blob;
    QMap input;
};

// fire-style layers: (hw, chi, k, cho)
Layer make_layer(int hw, int chi, int k, int cho) {
    Rng rng(static_cast<std::uint64_t>(hw * 7919 + chi * 31 + k * 7 + cho));
    Layer l;
    l.spec = ConvSpec{hw, hw, chi, k, 1, k / 2, cho};
    l.spec.use_relu = true;
    l.blob.name = "bench";
    l.blob.co = cho;
    l.blob.k = k;
    l.blob.ci = chi;
    l.blob.w_fmt = {8, 7};
    l.blob.b_fmt = {8, 9};
    l.blob.weights.resize(l.spec.weight_count());
    l.blob.bias.resize(static_cast<std::size_t>(cho));
    for (auto& v : l.blob.weights) v = static_cast<std::int8_t>(rng.range(-128, 127));
    for (auto& v : l.blob.bias) v = static_cast<std::int8_t>(rng.range(-128, 127));
    l.input = QMap(l.spec.in_shape(), FxpFormat{8, 5});
    for (auto& v : l.input.data()) v = static_cast<std::int8_t>(rng.range(-128, 127));
    return l;
}

constexpr FxpFormat kOut{8, 4};

void args(benchmark::internal::Benchmark* b) {
    b->Args({55, 16, 1, 64})->Args({55, 16, 3, 64})->Args({27, 32, 3, 128})->Args({13, 64, 3, 256});
    b->Unit(benchmark::kMillisecond);
}

void BM_ConvRef(benchmark::State& st) {
    const auto l = make_layer(st.range(0), st.range(1), st.range(2), st.range(3));
    for (auto _ : st) benchmark::DoNotOptimize(ref::conv(l.input, l.spec, l.blob, kOut));
    st.SetItemsProcessed(st.iterations() * l.spec.h_out() * l.spec.w_out() * l.spec.ch_out);
}
BENCHMARK(BM_ConvRef)->Apply(args);

void BM_ConvPar(benchmark::State& st) {
    const auto l = make_layer(st.range(0), st.range(1), st.range(2), st.range(3));
    st.counters["threads"] = par::max_threads();
    for (auto _ : st) benchmark::DoNotOptimize(par::conv(l.input, l.spec, l.blob, kOut));
    st.SetItemsProcessed(st.iterations() * l.spec.h_out() * l.spec.w_out() * l.spec.ch_out);
}
BENCHMARK(BM_ConvPar)->Apply(args);

void BM_AccelConv(benchmark::State& st) {
    const auto l = make_layer(st.range(0), st.range(1), st.range(2), st.range(3));
    AccelConfig cfg;
    const auto inv = make_invocation(l.spec, l.blob, l.input.fmt(), kOut);
    const auto banks = partition_weights(l.blob, cfg);
    for (auto _ : st) benchmark::DoNotOptimize(accel_conv(inv, l.input, banks, cfg));
    st.SetItemsProcessed(st.iterations() * l.spec.h_out() * l.spec.w_out() * l.spec.ch_out);
}
BENCHMARK(BM_AccelConv)->Args({27, 32, 3, 128})->Unit(benchmark::kMillisecond);

void pool_args(benchmark::internal::Benchmark* b) {
    b->Args({111, 64})->Args({55, 128})->Args({27, 256});
}

void BM_MaxpoolRef(benchmark::State& st) {
    const auto l = make_layer(st.range(0), st.range(1), 1, 1);
    const PoolSpec p{3, 2, 0};
    for (auto _ : st) benchmark::DoNotOptimize(ref::maxpool(l.input, p));
}
BENCHMARK(BM_MaxpoolRef)->Apply(pool_args);

void BM_MaxpoolPar(benchmark::State& st) {
    const auto l = make_layer(st.range(0), st.range(1), 1, 1);
    const PoolSpec p{3, 2, 0};
    for (auto _ : st) benchmark::DoNotOptimize(par::maxpool(l.input, p));
}
BENCHMARK(BM_MaxpoolPar)->Apply(pool_args);

}  // namespace

BENCHMARK_MAIN();
