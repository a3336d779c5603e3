#pragma once

// Analytical latency model of the accelerator and a discrete-event walk of
// the same loop nest used as its oracle.
//
// Cost of one invocation (closed form, every constant in ModelParams):
//
//   invocation_over + precalc_cc + init_caches_cc * (weights + biases)
//   + sum over output rows of
//       shift(ho) + init_win + dataflow_over
//       + w_out * max(cco, update_win, write_back)
//       + write_back                               (leftover pixel)
//       + tail(ho)                                 (unused columns of the last row)
//   + drain                                        (rows below the last window)
//
// Pipelined loops cost TRIPCOUNT * II + ITERATION_LATENCY with II = 1.
// Data movement runs in chi_num-code beats on the input side and
// par_fact-code beats on the output side.

#include <cstdint>
#include <string>
#include <vector>

#include "sqj/accel.hpp"
#include "sqj/network.hpp"
#include "sqj/transforms.hpp"

namespace sqj {

struct ModelParams {
    std::int64_t pipe_cco_fill = 6;     // PIPE_CCO_DSP_LUT_FILL
    std::int64_t cco_over = 4;          // CCO_DSP_LUT_OVER
    std::int64_t shift_iter_lat = 3;
    std::int64_t shift_over = 5;
    std::int64_t init_win_iter_lat = 3;
    std::int64_t init_win_over = 4;
    std::int64_t update_iter_lat = 4;
    std::int64_t update_over = 4;
    std::int64_t write_back_iter_lat = 2;
    std::int64_t write_back_over = 3;
    std::int64_t precalc_cc = 40;
    std::int64_t init_caches_cc = 1;    // per parameter code
    std::int64_t dataflow_over = 2;     // per L_W_OUT region entry
    std::int64_t invocation_over = 2500;  // driver / DMA setup
    std::int64_t pool_iter_lat = 3;     // stand-alone pool pass
    std::int64_t pool_over = 4;

    static constexpr std::int64_t kInitiationInterval = 1;

    static ModelParams zero();
    void validate() const;

    friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

/// Pipelined loop: tripcount * ii + iteration_latency.
constexpr std::int64_t loop_cc(std::int64_t tripcount, std::int64_t ii,
                               std::int64_t iteration_latency) {
    return tripcount * ii + iteration_latency;
}

/// calc_ch_out cycles for one output pixel:
/// ceil(CHO/PF) * K * K * ceil(CHI/CN) + fill + over.
constexpr std::int64_t cco_cc(int cho, int k, int chi, int par_fact, int chi_num,
                              std::int64_t fill, std::int64_t over) {
    return static_cast<std::int64_t>(ceil_div(cho, par_fact)) * k * k * ceil_div(chi, chi_num) +
           fill + over;
}

/// MAC-array work per output pixel with fill/overhead stripped.
constexpr std::int64_t cco_work(int cho, int k, int chi, int par_fact, int chi_num) {
    return cco_cc(cho, k, chi, par_fact, chi_num, 0, 0);
}

/// Per-call costs of the stages inside L_W_OUT plus the row-level window init.
struct StageCosts {
    std::int64_t cco = 0;
    std::int64_t update_win = 0;
    std::int64_t write_back = 0;
    std::int64_t init_win = 0;

    std::int64_t iteration() const;
};

StageCosts stage_costs(const ConvInvocation& inv, const AccelConfig& cfg, const ModelParams& p);

struct LatencyBreakdown {
    std::int64_t overhead = 0;      // invocation_over
    std::int64_t precalc = 0;
    std::int64_t init_caches = 0;
    std::int64_t shift = 0;
    std::int64_t init_win = 0;
    std::int64_t dataflow = 0;
    std::int64_t pixel_loop = 0;    // sum of L_W_OUT iterations
    std::int64_t leftover = 0;
    std::int64_t row_tail = 0;
    std::int64_t drain = 0;
    std::int64_t pool = 0;          // stand-alone pool passes

    // Statistics outside the sum.
    std::int64_t pixel_calc = 0;    // sum of cco over all pixels
    std::int64_t pixel_work = 0;    // same with fill/overhead stripped
    std::int64_t hidden_bytes = 0;  // input re-read by extra partitions
    int invocations = 0;

    std::int64_t total() const;
    LatencyBreakdown& operator+=(const LatencyBreakdown& o);
    friend bool operator==(const LatencyBreakdown&, const LatencyBreakdown&) = default;
};

/// Closed-form cost of one invocation that fits the caches.
LatencyBreakdown invocation_latency(const ConvInvocation& inv, const AccelConfig& cfg,
                                    const ModelParams& p);
/// Closed form for a whole conv layer, partitioned over output channels as
/// needed (each partition is a full invocation).
LatencyBreakdown layer_latency(const ConvInvocation& inv, const AccelConfig& cfg,
                               const ModelParams& p);
LatencyBreakdown pool_latency(Shape in, const PoolSpec& pool, const AccelConfig& cfg,
                              const ModelParams& p);

/// Discrete-event walk of the loop nest for one invocation / one layer.
LatencyBreakdown simulate_invocation(const ConvInvocation& inv, const AccelConfig& cfg,
                                     const ModelParams& p);
LatencyBreakdown simulate_layer(const ConvInvocation& inv, const AccelConfig& cfg,
                                const ModelParams& p);
LatencyBreakdown simulate_pool(Shape in, const PoolSpec& pool, const AccelConfig& cfg,
                               const ModelParams& p);

struct LayerReport {
    std::string name;
    std::string kind;              // conv, conv+pool, pool, cpu:<kind>
    int invocations = 0;
    std::int64_t cycles_model = 0;
    std::int64_t cycles_sim = 0;
    LatencyBreakdown breakdown;    // closed-form breakdown
};

struct CycleReport {
    std::vector<LayerReport> layers;
    double clock_mhz = 100.0;

    std::int64_t total_cycles() const;
    std::int64_t total_sim_cycles() const;
    double ms() const { return cycles_to_ms(total_cycles(), clock_mhz); }
    double fps() const { return ms_to_fps(ms()); }

    static double cycles_to_ms(std::int64_t cycles, double clock_mhz);
    static double ms_to_fps(double ms);
};

/// Maps the graph with plan_accel_steps and costs every accelerator step.
/// CPU-side nodes are listed with zero cycles. Set with_simulation to false
/// to skip the event walk (cycles_sim = 0).
CycleReport network_latency(const NetworkGraph& g, const AccelConfig& cfg, const ModelParams& p,
                            double clock_mhz, bool with_simulation = true);

/// Two-decimal rendering that truncates instead of rounding (74.91 ms -> 13.34 fps).
std::string format_centi(double v);

ModelParams parse_model_params(const std::string& text);
std::string write_model_params(const ModelParams& p);

}  // namespace sqj
