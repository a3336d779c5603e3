#pragma once

// FPGA resource estimate for an accelerator configuration, checked against a
// device budget. BRAM is counted per independently addressed bank as
// ceil(bytes / 4608) 36Kb blocks, which is accurate to about one block per bank.

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sqj/accel.hpp"
#include "sqj/network.hpp"

namespace sqj {

struct DeviceBudget {
    std::string name = "custom";
    long long lut = 0;
    long long ff = 0;
    long long bram_36k = 0;
    long long dsp = 0;

    /// Zynq-7020: utilization figures of the reference design divided by their
    /// percentages (172 DSP / 78 %, 96.5 BRAM / 69 %, 36.2k LUT / 68 %).
    static DeviceBudget xc7z020();
    friend bool operator==(const DeviceBudget&, const DeviceBudget&) = default;
};

/// Built-in device by name.
std::optional<DeviceBudget> builtin_budget(const std::string& name);
/// key=value lines (name, lut, ff, bram_36k, dsp); '#' comments.
DeviceBudget parse_budget(const std::string& text);

inline constexpr long long kBramBytes = 4608;  // one 36Kb block

// LUT/FF cost per MAC unit, plus a fixed control/interface share.
inline constexpr long long kLutBase = 9000;
inline constexpr long long kLutPerLutMac = 95;
inline constexpr long long kLutPerDspMac = 20;
inline constexpr long long kFfBase = 8000;
inline constexpr long long kFfPerMac = 40;

struct ResourceEstimate {
    int macs = 0;
    int dsp_macs = 0;
    int lut_macs = 0;
    long long dsp = 0;
    long long lut = 0;
    long long ff = 0;
    long long bram_weights = 0;
    long long bram_bias = 0;
    long long bram_linebuf = 0;
    long long bram_windows = 0;
    long long bram_out_pix = 0;
    bool feasible = false;
    std::vector<std::string> violations;

    long long bram() const {
        return bram_weights + bram_bias + bram_linebuf + bram_windows + bram_out_pix;
    }
};

long long bram_blocks(long long bytes);
ResourceEstimate estimate_resources(const AccelConfig& cfg, const DeviceBudget& budget);

/// Per-bound maxima over every conv layer of the (already mapped) networks;
/// other fields of base are kept. weight_cap > 0 caps Q_CHOxKxKxCHI_MAX (and
/// so forces output-channel partitioning) but never below one channel group.
AccelConfig size_caches(std::span<const NetworkGraph> networks, const AccelConfig& base,
                        int weight_cap = 0);

}  // namespace sqj
