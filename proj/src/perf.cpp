#include "sqj/perf.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <queue>
#include <sstream>
#include <stdexcept>
#include <utility>

namespace sqj {

namespace {

using Field = std::int64_t ModelParams::*;

constexpr std::array<std::pair<const char*, Field>, 16> kFields{{
    {"pipe_cco_fill", &ModelParams::pipe_cco_fill},
    {"cco_over", &ModelParams::cco_over},
    {"shift_iter_lat", &ModelParams::shift_iter_lat},
    {"shift_over", &ModelParams::shift_over},
    {"init_win_iter_lat", &ModelParams::init_win_iter_lat},
    {"init_win_over", &ModelParams::init_win_over},
    {"update_iter_lat", &ModelParams::update_iter_lat},
    {"update_over", &ModelParams::update_over},
    {"write_back_iter_lat", &ModelParams::write_back_iter_lat},
    {"write_back_over", &ModelParams::write_back_over},
    {"precalc_cc", &ModelParams::precalc_cc},
    {"init_caches_cc", &ModelParams::init_caches_cc},
    {"dataflow_over", &ModelParams::dataflow_over},
    {"invocation_over", &ModelParams::invocation_over},
    {"pool_iter_lat", &ModelParams::pool_iter_lat},
    {"pool_over", &ModelParams::pool_over},
}};

constexpr std::int64_t kII = ModelParams::kInitiationInterval;

std::int64_t beats(int ch, int chi_num) { return ceil_div(ch, chi_num); }

// Real input rows inside padded rows [a, b).
std::int64_t real_rows_in(const ConvSpec& s, int a, int b) {
    return std::max(0, std::min(b, s.pad + s.h_in) - std::max(a, s.pad));
}

std::int64_t stream_cc(std::int64_t pixels, std::int64_t b, const ModelParams& p) {
    return pixels > 0 ? loop_cc(pixels * b, kII, p.shift_iter_lat) : 0;
}

void require_valid(const ConvInvocation& inv, const AccelConfig& cfg, const ModelParams& p) {
    inv.spec.validate();
    cfg.validate();
    p.validate();
}

}  // namespace

ModelParams ModelParams::zero() {
    ModelParams p;
    for (const auto& [name, field] : kFields) p.*field = 0;
    return p;
}

void ModelParams::validate() const {
    for (const auto& [name, field] : kFields) {
        if (this->*field < 0) throw std::invalid_argument(std::string("model param ") + name + " < 0");
    }
}

std::int64_t StageCosts::iteration() const { return std::max({cco, update_win, write_back}); }

StageCosts stage_costs(const ConvInvocation& inv, const AccelConfig& cfg, const ModelParams& p) {
    const auto& s = inv.spec;
    const std::int64_t b = beats(s.ch_in, cfg.chi_num);
    const std::int64_t kk = static_cast<std::int64_t>(s.kernel) * s.kernel;
    StageCosts c;
    c.cco = cco_cc(s.ch_out, s.kernel, s.ch_in, cfg.par_fact, cfg.chi_num, p.pipe_cco_fill,
                   p.cco_over);
    c.update_win = p.update_over + loop_cc(kk * b, kII, p.update_iter_lat);
    c.write_back = p.write_back_over + loop_cc(ceil_div(s.ch_out, cfg.par_fact), kII,
                                               p.write_back_iter_lat);
    c.init_win = p.init_win_over + loop_cc(kk * b, kII, p.init_win_iter_lat);
    return c;
}

std::int64_t LatencyBreakdown::total() const {
    return overhead + precalc + init_caches + shift + init_win + dataflow + pixel_loop + leftover +
           row_tail + drain + pool;
}

LatencyBreakdown& LatencyBreakdown::operator+=(const LatencyBreakdown& o) {
    overhead += o.overhead;
    precalc += o.precalc;
    init_caches += o.init_caches;
    shift += o.shift;
    init_win += o.init_win;
    dataflow += o.dataflow;
    pixel_loop += o.pixel_loop;
    leftover += o.leftover;
    row_tail += o.row_tail;
    drain += o.drain;
    pool += o.pool;
    pixel_calc += o.pixel_calc;
    pixel_work += o.pixel_work;
    hidden_bytes += o.hidden_bytes;
    invocations += o.invocations;
    return *this;
}

// ---- closed form ----------------------------------------------------------

LatencyBreakdown invocation_latency(const ConvInvocation& inv, const AccelConfig& cfg,
                                    const ModelParams& p) {
    require_valid(inv, cfg, p);
    check_capacity(inv, cfg);
    const auto& s = inv.spec;
    const int k = s.kernel;
    const int st = s.stride;
    const std::int64_t h_out = s.h_out();
    const std::int64_t w_out = s.w_out();
    const std::int64_t wp = inv.padded_width();
    const std::int64_t b = beats(s.ch_in, cfg.chi_num);
    const StageCosts c = stage_costs(inv, cfg, p);

    LatencyBreakdown r;
    r.invocations = 1;
    r.overhead = p.invocation_over;
    r.precalc = p.precalc_cc;
    r.init_caches =
        p.init_caches_cc * (static_cast<std::int64_t>(s.ch_out) * inv.kxkxchi() + s.ch_out);

    // First row fills K-1 rows; every later row adds min(S, K) - 1 whole rows
    // plus whatever real rows fall in the gap when S > K.
    const std::int64_t first_shift = p.shift_over + loop_cc((static_cast<std::int64_t>(k - 1) * wp + k) * b, kII, p.shift_iter_lat);
    std::int64_t skipped = 0;
    for (int ho = 1; ho < h_out; ++ho) skipped += real_rows_in(s, (ho - 1) * st + k, ho * st);
    const std::int64_t later_rows = h_out - 1;
    const std::int64_t later_full = std::min(st, k) - 1;
    r.shift = first_shift +
              later_rows * (p.shift_over + p.shift_iter_lat + (later_full * wp + k) * b) +
              skipped * s.w_in * b;

    r.init_win = h_out * c.init_win;
    r.dataflow = h_out * p.dataflow_over;
    r.pixel_loop = h_out * w_out * c.iteration();
    r.leftover = h_out * c.write_back;
    r.row_tail = h_out * stream_cc(wp - k - (w_out - 1) * st, b, p);
    const std::int64_t trailing = real_rows_in(s, static_cast<int>((h_out - 1) * st + k),
                                               static_cast<int>(inv.padded_height()));
    r.drain = stream_cc(trailing * s.w_in, b, p);

    r.pixel_calc = h_out * w_out * c.cco;
    r.pixel_work = h_out * w_out * cco_work(s.ch_out, k, s.ch_in, cfg.par_fact, cfg.chi_num);
    return r;
}

namespace {

template <typename PerInvocation>
LatencyBreakdown over_partitions(const ConvInvocation& inv, const AccelConfig& cfg,
                                 PerInvocation&& one) {
    if (capacity_violations(inv, cfg).empty()) return one(inv);
    const PartitionPlan plan = partition_output_channels(inv, cfg);
    LatencyBreakdown total;
    for (const auto& range : plan.ranges) total += one(sub_invocation(inv, range));
    total.hidden_bytes += static_cast<std::int64_t>(plan.ranges.size() - 1) *
                          inv.spec.in_shape().size();
    return total;
}

}  // namespace

LatencyBreakdown layer_latency(const ConvInvocation& inv, const AccelConfig& cfg,
                               const ModelParams& p) {
    return over_partitions(inv, cfg, [&](const ConvInvocation& sub) {
        return invocation_latency(sub, cfg, p);
    });
}

LatencyBreakdown pool_latency(Shape in, const PoolSpec& pool, const AccelConfig& cfg,
                              const ModelParams& p) {
    cfg.validate();
    p.validate();
    if (pool.out_shape(in).size() == 0) throw ShapeError("pool window does not fit " + in.str());
    LatencyBreakdown r;
    r.invocations = 1;
    r.overhead = p.invocation_over;
    r.pool = p.pool_over + loop_cc(static_cast<std::int64_t>(in.h) * in.w * beats(in.c, cfg.chi_num),
                                   kII, p.pool_iter_lat);
    return r;
}

// ---- event simulator ------------------------------------------------------

namespace {

/// Stage completions ordered by time, ties broken by issue order.
class EventQueue {
public:
    /// Runs one stage after everything issued so far has completed.
    void sequential(std::int64_t duration, std::int64_t& bucket) {
        const std::int64_t start = now_;
        push(start + duration);
        settle();
        bucket += now_ - start;
    }

    /// Runs stages that start together; the region ends at the last completion.
    template <std::size_t N>
    void concurrent(const std::array<std::int64_t, N>& durations, std::int64_t& bucket) {
        const std::int64_t start = now_;
        for (auto d : durations) push(start + d);
        settle();
        bucket += now_ - start;
    }

    std::int64_t now() const { return now_; }

private:
    struct Event {
        std::int64_t time;
        std::int64_t seq;
        bool operator>(const Event& o) const {
            return time != o.time ? time > o.time : seq > o.seq;
        }
    };

    void push(std::int64_t t) { queue_.push({t, seq_++}); }

    void settle() {
        while (!queue_.empty()) {
            now_ = std::max(now_, queue_.top().time);
            queue_.pop();
        }
    }

    std::priority_queue<Event, std::vector<Event>, std::greater<>> queue_;
    std::int64_t now_ = 0;
    std::int64_t seq_ = 0;
};

}  // namespace

LatencyBreakdown simulate_invocation(const ConvInvocation& inv, const AccelConfig& cfg,
                                     const ModelParams& p) {
    require_valid(inv, cfg, p);
    check_capacity(inv, cfg);
    const auto& s = inv.spec;
    const int h_out = s.h_out();
    const int w_out = s.w_out();
    const int wp = inv.padded_width();
    const std::int64_t b = beats(s.ch_in, cfg.chi_num);
    const int q_cho = inv.q_cho(cfg.par_fact);

    // Per-call durations from the trip counts of each stage's loops.
    std::int64_t mac_cycles = 0;
    for (int q = 0; q < q_cho; ++q)
        for (int kh = 0; kh < s.kernel; ++kh)
            for (int kw = 0; kw < s.kernel; ++kw) mac_cycles += b;
    const std::int64_t cco = mac_cycles + p.pipe_cco_fill + p.cco_over;
    const std::int64_t window_beats = static_cast<std::int64_t>(s.kernel) * s.kernel * b;
    const std::int64_t update = p.update_over + loop_cc(window_beats, kII, p.update_iter_lat);
    const std::int64_t init_win = p.init_win_over + loop_cc(window_beats, kII, p.init_win_iter_lat);
    const std::int64_t write_back = p.write_back_over + loop_cc(q_cho, kII, p.write_back_iter_lat);

    LatencyBreakdown r;
    r.invocations = 1;
    EventQueue ev;
    ev.sequential(p.invocation_over, r.overhead);
    ev.sequential(p.precalc_cc, r.precalc);
    std::int64_t codes = 0;
    for (int co = 0; co < s.ch_out; ++co) codes += inv.kxkxchi() + 1;  // weights + bias
    ev.sequential(p.init_caches_cc * codes, r.init_caches);

    for (int ho = 0; ho < h_out; ++ho) {
        const RowLoad plan = plan_row_load(inv, ho);
        const std::int64_t pixels = static_cast<std::int64_t>(plan.skipped_real_rows) * s.w_in +
                                    static_cast<std::int64_t>(plan.full_rows.size()) * wp +
                                    s.kernel;
        ev.sequential(p.shift_over + loop_cc(pixels * b, kII, p.shift_iter_lat), r.shift);
        ev.sequential(init_win, r.init_win);
        ev.sequential(p.dataflow_over, r.dataflow);
        int stream_col = s.kernel;
        for (int wo = 0; wo < w_out; ++wo) {
            ev.concurrent(std::array<std::int64_t, 3>{cco, update, write_back}, r.pixel_loop);
            r.pixel_calc += cco;
            r.pixel_work += mac_cycles;
            if (wo + 1 < w_out) stream_col = std::min(wp, stream_col + s.stride);
        }
        ev.sequential(write_back, r.leftover);
        const int tail = wp - stream_col;
        if (tail > 0) ev.sequential(loop_cc(tail * b, kII, p.shift_iter_lat), r.row_tail);
    }
    const int trailing = trailing_real_rows(inv);
    if (trailing > 0) {
        ev.sequential(loop_cc(static_cast<std::int64_t>(trailing) * s.w_in * b, kII,
                              p.shift_iter_lat),
                      r.drain);
    }
    if (ev.now() != r.total()) throw std::logic_error("simulator lost cycles");
    return r;
}

LatencyBreakdown simulate_layer(const ConvInvocation& inv, const AccelConfig& cfg,
                                const ModelParams& p) {
    return over_partitions(inv, cfg, [&](const ConvInvocation& sub) {
        return simulate_invocation(sub, cfg, p);
    });
}

LatencyBreakdown simulate_pool(Shape in, const PoolSpec& pool, const AccelConfig& cfg,
                               const ModelParams& p) {
    cfg.validate();
    p.validate();
    if (pool.out_shape(in).size() == 0) throw ShapeError("pool window does not fit " + in.str());
    LatencyBreakdown r;
    r.invocations = 1;
    EventQueue ev;
    ev.sequential(p.invocation_over, r.overhead);
    std::int64_t trips = 0;
    for (int h = 0; h < in.h; ++h) trips += static_cast<std::int64_t>(in.w) * beats(in.c, cfg.chi_num);
    ev.sequential(p.pool_over + loop_cc(trips, kII, p.pool_iter_lat), r.pool);
    return r;
}

// ---- network report -------------------------------------------------------

std::int64_t CycleReport::total_cycles() const {
    std::int64_t t = 0;
    for (const auto& l : layers) t += l.cycles_model;
    return t;
}

std::int64_t CycleReport::total_sim_cycles() const {
    std::int64_t t = 0;
    for (const auto& l : layers) t += l.cycles_sim;
    return t;
}

double CycleReport::cycles_to_ms(std::int64_t cycles, double clock_mhz) {
    if (!(clock_mhz > 0)) throw std::invalid_argument("clock must be positive");
    return static_cast<double>(cycles) / (clock_mhz * 1000.0);
}

double CycleReport::ms_to_fps(double ms) { return ms > 0 ? 1000.0 / ms : 0.0; }

CycleReport network_latency(const NetworkGraph& g, const AccelConfig& cfg, const ModelParams& p,
                            double clock_mhz, bool with_simulation) {
    CycleReport rep;
    rep.clock_mhz = clock_mhz;
    for (const auto& step : plan_accel_steps(g)) {
        const LayerNode& n = g.node(step.node);
        LayerReport lr;
        lr.name = n.name;
        switch (step.kind) {
        case StepKind::Conv: {
            ConvSpec spec = g.conv_spec(n);
            if (step.pool) spec.fused_pool = g.pool_spec(g.node(*step.pool));
            ConvInvocation inv;
            inv.spec = spec;
            inv.in_fmt = {8, n.fl_in.value_or(0)};
            inv.out_fmt = {8, n.fl_out.value_or(0)};
            inv.w_fmt = {8, n.fl_w.value_or(0)};
            inv.b_fmt = {8, n.fl_b.value_or(0)};
            lr.kind = step.pool ? "conv+pool" : "conv";
            lr.breakdown = layer_latency(inv, cfg, p);
            if (with_simulation) lr.cycles_sim = simulate_layer(inv, cfg, p).total();
            break;
        }
        case StepKind::StandalonePool: {
            const PoolSpec ps = g.pool_spec(n);
            lr.kind = "pool";
            lr.breakdown = pool_latency(n.in_shape, ps, cfg, p);
            if (with_simulation) lr.cycles_sim = simulate_pool(n.in_shape, ps, cfg, p).total();
            break;
        }
        case StepKind::Cpu:
            lr.kind = std::string("cpu:") + std::string(kind_name(n.kind));
            break;
        }
        lr.invocations = lr.breakdown.invocations;
        lr.cycles_model = lr.breakdown.total();
        rep.layers.push_back(std::move(lr));
    }
    return rep;
}

std::string format_centi(double v) {
    const bool neg = v < 0;
    const auto centi = static_cast<long long>(std::floor(std::fabs(v) * 100.0 + 1e-6));
    char buf[48];
    std::snprintf(buf, sizeof buf, "%s%lld.%02lld", neg && centi ? "-" : "", centi / 100,
                  centi % 100);
    return buf;
}

ModelParams parse_model_params(const std::string& text) {
    ModelParams p;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw std::invalid_argument("model params line " + std::to_string(lineno) +
                                        ": expected key=value");
        }
        auto trim = [](std::string s) {
            const auto a = s.find_first_not_of(" \t\r");
            const auto b = s.find_last_not_of(" \t\r");
            return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
        };
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        const auto it = std::find_if(kFields.begin(), kFields.end(),
                                     [&](const auto& f) { return key == f.first; });
        if (it == kFields.end()) {
            throw std::invalid_argument("model params line " + std::to_string(lineno) +
                                        ": unknown key '" + key + "'");
        }
        std::size_t used = 0;
        long long v = 0;
        try {
            v = std::stoll(value, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used == 0 || used != value.size()) {
            throw std::invalid_argument("model params line " + std::to_string(lineno) +
                                        ": bad integer '" + value + "'");
        }
        p.*(it->second) = v;
    }
    p.validate();
    return p;
}

std::string write_model_params(const ModelParams& p) {
    std::string out;
    for (const auto& [name, field] : kFields) out += std::string(name) + "=" + std::to_string(p.*field) + "\n";
    return out;
}

}  // namespace sqj
