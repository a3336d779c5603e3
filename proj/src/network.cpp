#include "sqj/network.hpp"

#include <algorithm>
#include <charconv>
#include <set>
#include <sstream>

namespace sqj {

namespace {

constexpr std::size_t kFieldCount = 15;

struct KindEntry {
    LayerKind kind;
    std::string_view name;
};

constexpr KindEntry kKinds[] = {
    {LayerKind::Conv, "conv"},
    {LayerKind::MaxPool, "maxpool"},
    {LayerKind::Concat, "concat"},
    {LayerKind::GlobalAvgPool, "global_avgpool"},
    {LayerKind::Softmax, "softmax"},
    {LayerKind::Reshape, "reshape"},
};

[[noreturn]] void node_error(const LayerNode& n, const std::string& msg) {
    throw NetworkError("node '" + n.name + "': " + msg);
}

std::optional<int> parse_field(std::string_view tok, int line, std::string_view what) {
    if (tok == "-") return std::nullopt;
    int v = 0;
    auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc{} || p != tok.data() + tok.size()) {
        throw NetworkError("line " + std::to_string(line) + ": bad " + std::string(what) +
                           " field '" + std::string(tok) + "'");
    }
    return v;
}

std::vector<std::string> split(std::string_view s, char sep) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        auto pos = s.find(sep, start);
        out.emplace_back(s.substr(start, pos - start));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

std::string opt_str(std::optional<int> v) { return v ? std::to_string(*v) : "-"; }

}  // namespace

std::string_view kind_name(LayerKind k) {
    for (const auto& e : kKinds) {
        if (e.kind == k) return e.name;
    }
    return "?";
}

void ConvSpec::validate() const {
    if (h_in < 1 || w_in < 1 || ch_in < 1 || ch_out < 1) {
        throw ShapeError("conv dims must be positive");
    }
    if (kernel < 1 || stride < 1 || pad < 0) {
        throw ShapeError("conv needs K >= 1, S >= 1, P >= 0");
    }
    if (h_out() < 1 || w_out() < 1) {
        throw ShapeError("conv output would be empty for input " + in_shape().str());
    }
    if (fused_pool) {
        const auto& p = *fused_pool;
        if (p.kernel < 1 || p.stride < 1 || p.pad < 0 || p.pad >= p.kernel) {
            throw ShapeError("invalid fused pool geometry");
        }
        auto o = p.out_shape(conv_shape());
        if (o.h < 1 || o.w < 1) throw ShapeError("fused pool output would be empty");
    }
}

bool LayerNode::reads_graph_input() const {
    return std::find(inputs.begin(), inputs.end(), kGraphInput) != inputs.end();
}

NetworkGraph::NetworkGraph(std::vector<LayerNode> nodes) : nodes_(std::move(nodes)) { infer(); }

const LayerNode* NetworkGraph::find(std::string_view name) const {
    for (const auto& n : nodes_) {
        if (n.name == name) return &n;
    }
    return nullptr;
}

const LayerNode& NetworkGraph::node(std::string_view name) const {
    if (const auto* n = find(name)) return *n;
    throw NetworkError("no node named '" + std::string(name) + "'");
}

std::size_t NetworkGraph::index_of(std::string_view name) const {
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        if (nodes_[i].name == name) return i;
    }
    throw NetworkError("no node named '" + std::string(name) + "'");
}

std::vector<std::string> NetworkGraph::consumers(std::string_view name) const {
    std::vector<std::string> out;
    for (const auto& n : nodes_) {
        if (std::find(n.inputs.begin(), n.inputs.end(), name) != n.inputs.end()) {
            out.push_back(n.name);
        }
    }
    return out;
}

ConvSpec NetworkGraph::conv_spec(const LayerNode& n) const {
    if (n.kind != LayerKind::Conv) node_error(n, "not a conv layer");
    ConvSpec s;
    s.h_in = n.in_shape.h;
    s.w_in = n.in_shape.w;
    s.ch_in = n.in_shape.c;
    s.kernel = n.kernel;
    s.stride = n.stride;
    s.pad = n.pad;
    s.ch_out = n.ch_out;
    s.use_relu = n.use_relu;
    return s;
}

PoolSpec NetworkGraph::pool_spec(const LayerNode& n) const {
    if (n.kind != LayerKind::MaxPool) node_error(n, "not a maxpool layer");
    return {n.kernel, n.stride, n.pad};
}

bool NetworkGraph::quantized() const {
    if (!input_fl_) return false;
    for (const auto& n : nodes_) {
        if (n.kind == LayerKind::Softmax) continue;
        if (!n.fl_in || !n.fl_out) return false;
        if (n.kind == LayerKind::Conv && (!n.fl_w || !n.fl_b)) return false;
    }
    return true;
}

void NetworkGraph::infer() {
    if (nodes_.empty()) throw NetworkError("network has no nodes");
    std::map<std::string, const LayerNode*, std::less<>> seen;
    bool have_input = false;
    input_fl_.reset();
    bool input_fl_seen = false;

    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        auto& n = nodes_[i];
        if (n.name.empty() || n.name == kGraphInput) node_error(n, "reserved or empty name");
        if (seen.count(n.name)) node_error(n, "duplicate node name");
        if (n.inputs.empty()) node_error(n, "no inputs");
        if (n.kind != LayerKind::Concat && n.inputs.size() != 1) {
            node_error(n, "expects exactly one input");
        }
        if (n.kind == LayerKind::Softmax && i + 1 != nodes_.size()) {
            node_error(n, "softmax must be the last node");
        }

        std::vector<Shape> in_shapes;
        std::vector<std::optional<int>> in_fls;
        for (const auto& src : n.inputs) {
            if (src == kGraphInput) {
                if (!have_input) {
                    if (n.in_shape.h < 1 || n.in_shape.w < 1 || n.in_shape.c < 1) {
                        node_error(n, "reads the network input but does not declare H W C");
                    }
                    input_shape_ = n.in_shape;
                    have_input = true;
                } else if (n.in_shape.size() != 0 && !(n.in_shape == input_shape_)) {
                    node_error(n, "declares input " + n.in_shape.str() +
                                      " but the network input is " + input_shape_.str());
                }
                if (n.fl_in) {
                    if (input_fl_seen && input_fl_ != n.fl_in) {
                        node_error(n, "disagrees on the network input FL");
                    }
                    input_fl_ = n.fl_in;
                }
                input_fl_seen = input_fl_seen || n.fl_in.has_value();
                in_shapes.push_back(input_shape_);
                in_fls.push_back(input_fl_);
                continue;
            }
            auto it = seen.find(src);
            if (it == seen.end()) {
                node_error(n, "input '" + src + "' is not an earlier node");
            }
            if (it->second->kind == LayerKind::Softmax) node_error(n, "cannot consume softmax");
            in_shapes.push_back(it->second->out_shape);
            in_fls.push_back(it->second->fl_out);
        }

        // Declared H W C on single-input nodes must agree with the producer.
        if (n.inputs.size() == 1) {
            const Shape inferred = in_shapes.front();
            if (n.in_shape.size() != 0 && !(n.in_shape == inferred)) {
                node_error(n, "declared input " + n.in_shape.str() + " but producer gives " +
                                  inferred.str());
            }
            n.in_shape = inferred;
            if (n.fl_in && in_fls.front() && *n.fl_in != *in_fls.front()) {
                node_error(n, "fl_in " + std::to_string(*n.fl_in) + " differs from producer FL " +
                                  std::to_string(*in_fls.front()));
            }
            if (!n.fl_in) n.fl_in = in_fls.front();
        }

        switch (n.kind) {
        case LayerKind::Conv: {
            if (n.kernel < 1 || n.stride < 1 || n.pad < 0 || n.ch_out < 1) {
                node_error(n, "conv needs K >= 1, S >= 1, P >= 0, CO >= 1");
            }
            Shape o{window_out_dim(n.in_shape.h, n.kernel, n.stride, n.pad),
                    window_out_dim(n.in_shape.w, n.kernel, n.stride, n.pad), n.ch_out};
            if (o.h < 1 || o.w < 1) node_error(n, "output would be empty");
            n.out_shape = o;
            if (n.fl_in && n.fl_b && n.fl_w && *n.fl_b > *n.fl_in + *n.fl_w) {
                node_error(n, "bias FL exceeds input FL + weight FL");
            }
            break;
        }
        case LayerKind::MaxPool: {
            if (n.kernel < 1 || n.stride < 1 || n.pad < 0 || n.pad >= n.kernel) {
                node_error(n, "maxpool needs K >= 1, S >= 1, 0 <= P < K");
            }
            Shape o = PoolSpec{n.kernel, n.stride, n.pad}.out_shape(n.in_shape);
            if (o.h < 1 || o.w < 1) node_error(n, "output would be empty");
            n.out_shape = o;
            if (n.fl_out && n.fl_in && *n.fl_out != *n.fl_in) {
                node_error(n, "maxpool cannot change the format");
            }
            if (!n.fl_out) n.fl_out = n.fl_in;
            break;
        }
        case LayerKind::Reshape: {
            if (n.kernel < 1 || n.stride < 1 || n.pad < 0) {
                node_error(n, "reshape needs K >= 1, S >= 1, P >= 0");
            }
            Shape o{window_out_dim(n.in_shape.h, n.kernel, n.stride, n.pad),
                    window_out_dim(n.in_shape.w, n.kernel, n.stride, n.pad), n.ch_out};
            if (o.h < 1 || o.w < 1) node_error(n, "output would be empty");
            if (n.ch_out < n.kernel * n.kernel * n.in_shape.c) {
                node_error(n, "channel count below K*K*C");
            }
            n.out_shape = o;
            if (n.fl_out && n.fl_in && *n.fl_out != *n.fl_in) {
                node_error(n, "reshape cannot change the format");
            }
            if (!n.fl_out) n.fl_out = n.fl_in;
            break;
        }
        case LayerKind::Concat: {
            Shape o = in_shapes.front();
            o.c = 0;
            std::optional<int> min_fl;
            bool all_fl = true;
            for (std::size_t k = 0; k < in_shapes.size(); ++k) {
                if (in_shapes[k].h != o.h || in_shapes[k].w != o.w) {
                    node_error(n, "inputs disagree on spatial size (" + in_shapes.front().str() +
                                      " vs " + in_shapes[k].str() + ")");
                }
                o.c += in_shapes[k].c;
                if (!in_fls[k]) {
                    all_fl = false;
                } else {
                    min_fl = min_fl ? std::min(*min_fl, *in_fls[k]) : *in_fls[k];
                }
            }
            if (n.in_shape.size() != 0 && !(n.in_shape == o)) {
                node_error(n, "declared shape " + n.in_shape.str() + " but inputs give " + o.str());
            }
            n.in_shape = o;
            n.out_shape = o;
            if (all_fl) {
                n.fl_in = min_fl;
                if (!n.fl_out) n.fl_out = min_fl;
            }
            break;
        }
        case LayerKind::GlobalAvgPool:
            n.out_shape = {1, 1, n.in_shape.c};
            if (!n.fl_out) n.fl_out = n.fl_in;
            break;
        case LayerKind::Softmax:
            if (n.in_shape.h != 1 || n.in_shape.w != 1) node_error(n, "softmax expects 1x1xC");
            n.out_shape = n.in_shape;
            n.fl_out.reset();
            break;
        }
        seen.emplace(n.name, &n);
    }
    if (!have_input) throw NetworkError("no node reads the network input");
}

NetworkGraph load_network(std::string_view text) {
    std::vector<LayerNode> nodes;
    std::istringstream in{std::string(text)};
    std::string raw;
    int line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        if (auto h = raw.find('#'); h != std::string::npos) raw.erase(h);
        std::istringstream ls(raw);
        std::vector<std::string> tok;
        for (std::string t; ls >> t;) tok.push_back(t);
        if (tok.empty()) continue;
        if (tok.size() != kFieldCount) {
            throw NetworkError("line " + std::to_string(line_no) + ": expected " +
                               std::to_string(kFieldCount) + " fields, got " +
                               std::to_string(tok.size()));
        }
        LayerNode n;
        n.name = tok[0];
        bool known = false;
        for (const auto& e : kKinds) {
            if (tok[1] == e.name) {
                n.kind = e.kind;
                known = true;
            }
        }
        if (!known) {
            throw NetworkError("line " + std::to_string(line_no) + ": unknown layer kind '" +
                               tok[1] + "'");
        }
        n.inputs = split(tok[2], ',');
        auto h = parse_field(tok[3], line_no, "H");
        auto w = parse_field(tok[4], line_no, "W");
        auto c = parse_field(tok[5], line_no, "C");
        if (h || w || c) {
            if (!(h && w && c)) {
                throw NetworkError("line " + std::to_string(line_no) +
                                   ": H W C must be given together");
            }
            n.in_shape = {*h, *w, *c};
        }
        n.kernel = parse_field(tok[6], line_no, "K").value_or(0);
        n.stride = parse_field(tok[7], line_no, "S").value_or(0);
        n.pad = parse_field(tok[8], line_no, "P").value_or(0);
        n.ch_out = parse_field(tok[9], line_no, "CO").value_or(0);
        n.use_relu = parse_field(tok[10], line_no, "relu").value_or(0) != 0;
        n.fl_in = parse_field(tok[11], line_no, "fl_in");
        n.fl_out = parse_field(tok[12], line_no, "fl_out");
        n.fl_w = parse_field(tok[13], line_no, "fl_w");
        n.fl_b = parse_field(tok[14], line_no, "fl_b");
        nodes.push_back(std::move(n));
    }
    return NetworkGraph(std::move(nodes));
}

std::string write_network(const NetworkGraph& g) {
    std::ostringstream out;
    out << "# name kind inputs H W C K S P CO relu fl_in fl_out fl_w fl_b\n";
    for (const auto& n : g.nodes()) {
        std::string inputs;
        for (std::size_t i = 0; i < n.inputs.size(); ++i) {
            inputs += (i ? "," : "") + n.inputs[i];
        }
        const bool windowed = n.kind == LayerKind::Conv || n.kind == LayerKind::MaxPool ||
                              n.kind == LayerKind::Reshape;
        const bool has_co = n.kind == LayerKind::Conv || n.kind == LayerKind::Reshape;
        out << n.name << ' ' << kind_name(n.kind) << ' ' << inputs << ' ';
        if (n.kind == LayerKind::Concat) {
            out << "- - - ";
        } else {
            out << n.in_shape.h << ' ' << n.in_shape.w << ' ' << n.in_shape.c << ' ';
        }
        if (windowed) {
            out << n.kernel << ' ' << n.stride << ' ' << n.pad << ' ';
        } else {
            out << "- - - ";
        }
        out << (has_co ? std::to_string(n.ch_out) : "-") << ' ';
        out << (n.kind == LayerKind::Conv ? (n.use_relu ? "1" : "0") : "-") << ' ';
        const bool fixed_io = n.kind != LayerKind::Softmax;
        // Concat FL on the input side is derived, never declared.
        out << (fixed_io && n.kind != LayerKind::Concat ? opt_str(n.fl_in) : "-") << ' ';
        out << (fixed_io ? opt_str(n.fl_out) : "-") << ' ';
        out << (n.kind == LayerKind::Conv ? opt_str(n.fl_w) : "-") << ' ';
        out << (n.kind == LayerKind::Conv ? opt_str(n.fl_b) : "-") << '\n';
    }
    return out.str();
}

}  // namespace sqj
