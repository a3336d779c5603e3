#include "sqj/resources.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace sqj {

DeviceBudget DeviceBudget::xc7z020() { return {"xc7z020", 53200, 106400, 140, 220}; }

std::optional<DeviceBudget> builtin_budget(const std::string& name) {
    if (name == "xc7z020") return DeviceBudget::xc7z020();
    return std::nullopt;
}

DeviceBudget parse_budget(const std::string& text) {
    DeviceBudget b;
    bool seen[4] = {};
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (auto h = line.find('#'); h != std::string::npos) line.erase(h);
        std::string key, value;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
            throw std::invalid_argument("budget line " + std::to_string(lineno) +
                                        ": expected key=value");
        }
        std::istringstream(line.substr(0, eq)) >> key;
        std::istringstream(line.substr(eq + 1)) >> value;
        if (key == "name") {
            b.name = value;
            continue;
        }
        long long* dst = nullptr;
        int idx = 0;
        if (key == "lut") dst = &b.lut, idx = 0;
        else if (key == "ff") dst = &b.ff, idx = 1;
        else if (key == "bram_36k") dst = &b.bram_36k, idx = 2;
        else if (key == "dsp") dst = &b.dsp, idx = 3;
        else throw std::invalid_argument("budget line " + std::to_string(lineno) + ": unknown key '" + key + "'");
        std::size_t used = 0;
        try {
            *dst = std::stoll(value, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used == 0 || used != value.size() || *dst < 0) {
            throw std::invalid_argument("budget line " + std::to_string(lineno) + ": bad count '" +
                                        value + "'");
        }
        seen[idx] = true;
    }
    if (!(seen[0] && seen[1] && seen[2] && seen[3])) {
        throw std::invalid_argument("budget needs lut, ff, bram_36k and dsp");
    }
    return b;
}

long long bram_blocks(long long bytes) { return bytes <= 0 ? 0 : (bytes + kBramBytes - 1) / kBramBytes; }

ResourceEstimate estimate_resources(const AccelConfig& cfg, const DeviceBudget& budget) {
    cfg.validate();
    ResourceEstimate e;
    e.macs = cfg.macs();
    e.dsp_macs = static_cast<int>(std::lround(e.macs * cfg.dsp_share));
    e.lut_macs = e.macs - e.dsp_macs;
    e.dsp = e.dsp_macs;
    e.lut = kLutBase + kLutPerLutMac * e.lut_macs + kLutPerDspMac * e.dsp_macs;
    e.ff = kFfBase + kFfPerMac * e.macs;

    // One bank per PE for weights and biases; the windows and output pixels
    // are double buffered.
    e.bram_weights = static_cast<long long>(cfg.par_fact) * bram_blocks(cfg.q_choxkxkxchi_max);
    e.bram_bias = static_cast<long long>(cfg.par_fact) * bram_blocks(cfg.q_cho_max);
    e.bram_linebuf = bram_blocks(static_cast<long long>(cfg.k_max) * cfg.wi_x_chi_max);
    e.bram_windows = 2 * bram_blocks(cfg.kxkxchi_max);
    e.bram_out_pix = 2 * bram_blocks(cfg.cho_max);

    auto check = [&](const char* what, long long used, long long avail) {
        if (used > avail) {
            e.violations.push_back(std::string(what) + " " + std::to_string(used) + " > " +
                                   std::to_string(avail));
        }
    };
    check("dsp", e.dsp, budget.dsp);
    check("bram_36k", e.bram(), budget.bram_36k);
    check("lut", e.lut, budget.lut);
    check("ff", e.ff, budget.ff);
    e.feasible = e.violations.empty();
    return e;
}

AccelConfig size_caches(std::span<const NetworkGraph> networks, const AccelConfig& base,
                        int weight_cap) {
    if (networks.empty()) throw std::invalid_argument("size_caches needs at least one network");
    AccelConfig cfg = base;
    cfg.k_max = cfg.wi_x_chi_max = cfg.kxkxchi_max = cfg.q_choxkxkxchi_max = cfg.q_cho_max =
        cfg.cho_max = 1;
    int max_kkc = 1;
    for (const auto& g : networks) {
        for (const auto& n : g.nodes()) {
            if (n.kind != LayerKind::Conv) continue;
            const ConvSpec s = g.conv_spec(n);
            const int kkc = s.kernel * s.kernel * s.ch_in;
            const int q_cho = ceil_div(s.ch_out, cfg.par_fact);
            cfg.k_max = std::max(cfg.k_max, s.kernel);
            cfg.wi_x_chi_max = std::max(cfg.wi_x_chi_max, (s.w_in + 2 * s.pad) * s.ch_in);
            cfg.kxkxchi_max = std::max(cfg.kxkxchi_max, kkc);
            cfg.q_choxkxkxchi_max = std::max(cfg.q_choxkxkxchi_max, q_cho * kkc);
            cfg.q_cho_max = std::max(cfg.q_cho_max, q_cho);
            cfg.cho_max = std::max(cfg.cho_max, s.ch_out);
            max_kkc = std::max(max_kkc, kkc);
        }
    }
    if (weight_cap > 0) {
        cfg.q_choxkxkxchi_max = std::max(max_kkc, std::min(cfg.q_choxkxkxchi_max, weight_cap));
    }
    return cfg;
}

}  // namespace sqj
