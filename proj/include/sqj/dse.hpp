#pragma once

// Design-space exploration over (par_fact, chi_num, dsp_share, weight cache).

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "sqj/perf.hpp"
#include "sqj/resources.hpp"

namespace sqj {

struct DseGrid {
    std::vector<int> par_fact{16};
    std::vector<int> chi_num{16};
    std::vector<double> dsp_share{0.5};
    std::vector<int> weight_cap{0};  // 0: size the weight cache for the largest layer

    std::size_t size() const {
        return par_fact.size() * chi_num.size() * dsp_share.size() * weight_cap.size();
    }
};

/// "par_fact=8,16,32;chi_num=8,16;dsp_share=0.5,1;weight_cap=0,8192".
/// Omitted keys keep their defaults.
DseGrid parse_grid(const std::string& text);

struct DsePoint {
    AccelConfig cfg;
    int weight_cap = 0;
    ResourceEstimate resources;
    std::int64_t total_cycles = 0;
    bool mappable = true;       // false when a layer cannot be split to fit
    std::string error;
    bool dominated = false;

    bool feasible() const { return mappable && resources.feasible; }
};

struct DseResult {
    std::vector<DsePoint> points;  // every grid point, sorted by configuration key

    std::vector<const DsePoint*> feasible() const;
    std::vector<const DsePoint*> pareto() const;
};

/// Evaluates every grid point (concurrently when OpenMP is available). The
/// networks are mapped per chi_num with map_for_accel before sizing caches.
DseResult dse(const DseGrid& grid, const DeviceBudget& budget,
              std::span<const NetworkGraph> networks, const ModelParams& params,
              const AccelConfig& base = {});

/// a dominates b: no worse in (cycles, dsp, bram, lut) and better in one.
bool dominates(const DsePoint& a, const DsePoint& b);

/// One row per feasible point.
std::string dse_csv(const DseResult& r);

}  // namespace sqj
