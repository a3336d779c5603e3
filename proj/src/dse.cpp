#include "sqj/dse.hpp"

#include <algorithm>
#include <sstream>
#include <stdexcept>
#include <tuple>

#include "sqj/transforms.hpp"

namespace sqj {

namespace {

template <typename T>
std::vector<T> parse_list(const std::string& key, const std::string& values) {
    std::vector<T> out;
    std::istringstream in(values);
    std::string item;
    while (std::getline(in, item, ',')) {
        std::istringstream one(item);
        T v{};
        if (!(one >> v) || !(one >> std::ws).eof()) {
            throw std::invalid_argument("grid " + key + ": bad value '" + item + "'");
        }
        out.push_back(v);
    }
    if (out.empty()) throw std::invalid_argument("grid " + key + ": empty list");
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

auto key_of(const DsePoint& p) {
    return std::make_tuple(p.cfg.par_fact, p.cfg.chi_num, p.cfg.dsp_share, p.weight_cap);
}

}  // namespace

DseGrid parse_grid(const std::string& text) {
    DseGrid g;
    std::istringstream in(text);
    std::string clause;
    while (std::getline(in, clause, ';')) {
        std::string key, values;
        const auto eq = clause.find('=');
        if (eq == std::string::npos) {
            if (clause.find_first_not_of(" \t\r\n") == std::string::npos) continue;
            throw std::invalid_argument("grid clause '" + clause + "' lacks '='");
        }
        std::istringstream(clause.substr(0, eq)) >> key;
        values = clause.substr(eq + 1);
        if (key == "par_fact") g.par_fact = parse_list<int>(key, values);
        else if (key == "chi_num") g.chi_num = parse_list<int>(key, values);
        else if (key == "dsp_share") g.dsp_share = parse_list<double>(key, values);
        else if (key == "weight_cap") g.weight_cap = parse_list<int>(key, values);
        else throw std::invalid_argument("unknown grid key '" + key + "'");
    }
    for (int v : g.par_fact) if (v < 1) throw std::invalid_argument("par_fact must be >= 1");
    for (int v : g.chi_num) if (v < 1) throw std::invalid_argument("chi_num must be >= 1");
    for (double v : g.dsp_share) {
        if (v < 0 || v > 1) throw std::invalid_argument("dsp_share must lie in [0, 1]");
    }
    for (int v : g.weight_cap) if (v < 0) throw std::invalid_argument("weight_cap must be >= 0");
    return g;
}

bool dominates(const DsePoint& a, const DsePoint& b) {
    const auto va = std::make_tuple(a.total_cycles, a.resources.dsp, a.resources.bram(),
                                    a.resources.lut);
    const auto vb = std::make_tuple(b.total_cycles, b.resources.dsp, b.resources.bram(),
                                    b.resources.lut);
    const bool no_worse = std::get<0>(va) <= std::get<0>(vb) && std::get<1>(va) <= std::get<1>(vb) &&
                          std::get<2>(va) <= std::get<2>(vb) && std::get<3>(va) <= std::get<3>(vb);
    return no_worse && va != vb;
}

std::vector<const DsePoint*> DseResult::feasible() const {
    std::vector<const DsePoint*> out;
    for (const auto& p : points) if (p.feasible()) out.push_back(&p);
    return out;
}

std::vector<const DsePoint*> DseResult::pareto() const {
    std::vector<const DsePoint*> out;
    for (const auto& p : points) if (p.feasible() && !p.dominated) out.push_back(&p);
    return out;
}

DseResult dse(const DseGrid& grid, const DeviceBudget& budget,
              std::span<const NetworkGraph> networks, const ModelParams& params,
              const AccelConfig& base) {
    if (grid.size() == 0) throw std::invalid_argument("empty DSE grid");
    if (networks.empty()) throw std::invalid_argument("DSE needs at least one network");

    // Mapped graphs depend only on chi_num.
    std::vector<std::vector<NetworkGraph>> mapped(grid.chi_num.size());
    for (std::size_t i = 0; i < grid.chi_num.size(); ++i) {
        for (const auto& g : networks) mapped[i].push_back(map_for_accel(g, grid.chi_num[i]));
    }

    struct Key {
        int pf;
        std::size_t cn;
        double share;
        int cap;
    };
    std::vector<Key> keys;
    for (int pf : grid.par_fact)
        for (std::size_t cn = 0; cn < grid.chi_num.size(); ++cn)
            for (double share : grid.dsp_share)
                for (int cap : grid.weight_cap) keys.push_back({pf, cn, share, cap});

    DseResult r;
    r.points.resize(keys.size());
    const auto n = static_cast<long>(keys.size());
#pragma omp parallel for schedule(dynamic)
    for (long i = 0; i < n; ++i) {
        const Key& k = keys[static_cast<std::size_t>(i)];
        AccelConfig cfg = base;
        cfg.par_fact = k.pf;
        cfg.chi_num = grid.chi_num[k.cn];
        cfg.dsp_share = k.share;
        DsePoint p;
        p.weight_cap = k.cap;
        p.cfg = size_caches(mapped[k.cn], cfg, k.cap);
        p.resources = estimate_resources(p.cfg, budget);
        try {
            for (const auto& g : mapped[k.cn]) {
                p.total_cycles += network_latency(g, p.cfg, params, 100.0, false).total_cycles();
            }
        } catch (const CapacityError& e) {
            p.mappable = false;
            p.error = e.what();
        }
        r.points[static_cast<std::size_t>(i)] = std::move(p);
    }

    std::sort(r.points.begin(), r.points.end(),
              [](const DsePoint& a, const DsePoint& b) { return key_of(a) < key_of(b); });
    for (auto& p : r.points) {
        if (!p.feasible()) continue;
        for (const auto& q : r.points) {
            if (q.feasible() && dominates(q, p)) {
                p.dominated = true;
                break;
            }
        }
    }
    return r;
}

std::string dse_csv(const DseResult& r) {
    std::ostringstream out;
    out << "# sqj2 dse v1\n";
    out << "par_fact,chi_num,dsp_share,weight_cap,dsp,bram,lut_macs,lut,total_cycles,dominated\n";
    for (const auto* p : r.feasible()) {
        out << p->cfg.par_fact << ',' << p->cfg.chi_num << ',' << p->cfg.dsp_share << ','
            << p->weight_cap << ',' << p->resources.dsp << ',' << p->resources.bram() << ','
            << p->resources.lut_macs << ',' << p->resources.lut << ',' << p->total_cycles << ','
            << (p->dominated ? 1 : 0) << '\n';
    }
    return out.str();
}

}  // namespace sqj
