#include "sqj/io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace sqj {

namespace {

constexpr char kParamMagic[4] = {'S', 'Q', 'J', '2'};
constexpr char kTensorMagic[4] = {'S', 'Q', 'T', '0'};

class Writer {
public:
    void raw(const void* p, std::size_t n) {
        const auto* b = static_cast<const std::uint8_t*>(p);
        out_.insert(out_.end(), b, b + n);
    }
    void u8(std::uint8_t v) { out_.push_back(v); }
    void i8(std::int8_t v) { out_.push_back(static_cast<std::uint8_t>(v)); }
    void u16(std::uint16_t v) {
        out_.push_back(static_cast<std::uint8_t>(v & 0xff));
        out_.push_back(static_cast<std::uint8_t>(v >> 8));
    }
    void f32(float f) {
        auto v = std::bit_cast<std::uint32_t>(f);
        for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    Bytes take() { return std::move(out_); }

private:
    Bytes out_;
};

class Reader {
public:
    explicit Reader(std::span<const std::uint8_t> b, const char* what) : b_(b), what_(what) {}

    void need(std::size_t n) const {
        if (pos_ + n > b_.size()) {
            throw FormatError(std::string(what_) + ": truncated at byte " + std::to_string(pos_) +
                              " (need " + std::to_string(n) + " more, have " +
                              std::to_string(b_.size() - pos_) + ")");
        }
    }
    std::uint8_t u8() {
        need(1);
        return b_[pos_++];
    }
    std::int8_t i8() { return static_cast<std::int8_t>(u8()); }
    std::uint16_t u16() {
        need(2);
        std::uint16_t v = static_cast<std::uint16_t>(b_[pos_] | (b_[pos_ + 1] << 8));
        pos_ += 2;
        return v;
    }
    float f32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b_[pos_ + i]) << (8 * i);
        pos_ += 4;
        return std::bit_cast<float>(v);
    }
    void magic(const char (&m)[4]) {
        need(4);
        if (std::memcmp(b_.data() + pos_, m, 4) != 0) {
            throw FormatError(std::string(what_) + ": bad magic, expected '" +
                              std::string(m, 4) + "'");
        }
        pos_ += 4;
    }
    std::string str(std::size_t n) {
        need(n);
        std::string s(reinterpret_cast<const char*>(b_.data() + pos_), n);
        pos_ += n;
        return s;
    }
    bool done() const { return pos_ == b_.size(); }
    std::size_t pos() const { return pos_; }

private:
    std::span<const std::uint8_t> b_;
    const char* what_;
    std::size_t pos_ = 0;
};

std::uint16_t checked_u16(int v, const std::string& what) {
    if (v < 0 || v > 0xffff) throw FormatError(what + " out of u16 range: " + std::to_string(v));
    return static_cast<std::uint16_t>(v);
}

std::int8_t checked_i8(int v, const std::string& what) {
    if (v < -128 || v > 127) throw FormatError(what + " out of i8 range: " + std::to_string(v));
    return static_cast<std::int8_t>(v);
}

template <typename T>
Bytes save_params_impl(const ParamSet<T>& params, std::uint16_t version) {
    Writer w;
    w.raw(kParamMagic, 4);
    w.u16(version);
    w.u16(checked_u16(static_cast<int>(params.size()), "blob count"));
    for (const auto& [name, b] : params) {
        if (name.size() > 255) throw FormatError("blob name longer than 255 bytes: " + name);
        if (!b.consistent()) throw FormatError("blob '" + name + "' has inconsistent lengths");
        if (b.k < 1 || b.k > 255) throw FormatError("blob '" + name + "' kernel out of u8 range");
        w.u8(static_cast<std::uint8_t>(name.size()));
        w.raw(name.data(), name.size());
        w.u16(checked_u16(b.co, "CO"));
        w.u8(static_cast<std::uint8_t>(b.k));
        w.u16(checked_u16(b.ci, "CI"));
        if constexpr (std::is_same_v<T, std::int8_t>) {
            w.i8(checked_i8(b.w_fmt.frac_len, "FLw"));
            w.i8(checked_i8(b.b_fmt.frac_len, "FLb"));
            w.raw(b.weights.data(), b.weights.size());
            w.raw(b.bias.data(), b.bias.size());
        } else {
            w.i8(0);
            w.i8(0);
            for (float f : b.weights) w.f32(f);
            for (float f : b.bias) w.f32(f);
        }
    }
    return w.take();
}

template <typename T>
ParamSet<T> load_params_impl(std::span<const std::uint8_t> bytes, const NetworkGraph& graph,
                             std::uint16_t want_version) {
    Reader r(bytes, "SQJ2");
    r.magic(kParamMagic);
    const auto version = r.u16();
    if (version != want_version) {
        throw FormatError("SQJ2: version " + std::to_string(version) + ", expected " +
                          std::to_string(want_version) +
                          (want_version == kParamVersionFixed ? " (int8 codes)" : " (float32)"));
    }
    const auto count = r.u16();

    std::size_t conv_count = 0;
    for (const auto& n : graph.nodes()) conv_count += n.kind == LayerKind::Conv;
    if (count != conv_count) {
        throw FormatError("SQJ2: file holds " + std::to_string(count) + " blobs, network has " +
                          std::to_string(conv_count) + " conv layers");
    }

    ParamSet<T> out;
    for (std::uint16_t i = 0; i < count; ++i) {
        ParamBlob<T> b;
        b.name = r.str(r.u8());
        b.co = r.u16();
        b.k = r.u8();
        b.ci = r.u16();
        const int flw = r.i8();
        const int flb = r.i8();
        const auto* node = graph.find(b.name);
        if (!node || node->kind != LayerKind::Conv) {
            throw FormatError("SQJ2: blob '" + b.name + "' does not name a conv layer");
        }
        if (b.co != node->ch_out || b.k != node->kernel || b.ci != node->in_shape.c) {
            throw FormatError("SQJ2: blob '" + b.name + "' is " + std::to_string(b.co) + "x" +
                              std::to_string(b.k) + "x" + std::to_string(b.k) + "x" +
                              std::to_string(b.ci) + ", layer expects " +
                              std::to_string(node->ch_out) + "x" + std::to_string(node->kernel) +
                              "x" + std::to_string(node->kernel) + "x" +
                              std::to_string(node->in_shape.c));
        }
        const std::size_t wn = static_cast<std::size_t>(b.co) * b.kkc();
        if constexpr (std::is_same_v<T, std::int8_t>) {
            b.w_fmt = {8, flw};
            b.b_fmt = {8, flb};
            r.need(wn + b.co);
            b.weights.resize(wn);
            b.bias.resize(b.co);
            for (auto& v : b.weights) v = r.i8();
            for (auto& v : b.bias) v = r.i8();
        } else {
            r.need((wn + b.co) * 4);
            b.weights.resize(wn);
            b.bias.resize(b.co);
            for (auto& v : b.weights) v = r.f32();
            for (auto& v : b.bias) v = r.f32();
        }
        if (!out.emplace(b.name, std::move(b)).second) {
            throw FormatError("SQJ2: duplicate blob for one layer");
        }
    }
    if (!r.done()) {
        throw FormatError("SQJ2: " + std::to_string(bytes.size() - r.pos()) +
                          " trailing bytes after the last blob");
    }
    return out;
}

void write_tensor_header(Writer& w, Shape s, DType t, int fl) {
    w.raw(kTensorMagic, 4);
    w.u16(checked_u16(s.h, "H"));
    w.u16(checked_u16(s.w, "W"));
    w.u16(checked_u16(s.c, "C"));
    w.u8(static_cast<std::uint8_t>(t));
    w.i8(checked_i8(fl, "FL"));
}

void check_shape(Shape got, Shape expected) {
    if (expected.size() != 0 && !(got == expected)) {
        throw FormatError("SQT0: tensor is " + got.str() + ", expected " + expected.str());
    }
}

}  // namespace

Bytes save_params(const QParamSet& params) {
    return save_params_impl(params, kParamVersionFixed);
}
Bytes save_params(const RParamSet& params) { return save_params_impl(params, kParamVersionReal); }

QParamSet load_params(std::span<const std::uint8_t> bytes, const NetworkGraph& graph) {
    return load_params_impl<std::int8_t>(bytes, graph, kParamVersionFixed);
}
RParamSet load_real_params(std::span<const std::uint8_t> bytes, const NetworkGraph& graph) {
    return load_params_impl<float>(bytes, graph, kParamVersionReal);
}

std::uint16_t param_version(std::span<const std::uint8_t> bytes) {
    Reader r(bytes, "SQJ2");
    r.magic(kParamMagic);
    return r.u16();
}

Bytes write_tensor(const QMap& m) {
    Writer w;
    write_tensor_header(w, m.shape(), DType::Int8, m.fmt().frac_len);
    w.raw(m.data().data(), m.size());
    return w.take();
}

Bytes write_tensor(const RMap& m) {
    Writer w;
    write_tensor_header(w, m.shape(), DType::Real32, 0);
    for (float f : m.data()) w.f32(f);
    return w.take();
}

AnyMap read_tensor(std::span<const std::uint8_t> bytes) {
    Reader r(bytes, "SQT0");
    r.magic(kTensorMagic);
    Shape s;
    s.h = r.u16();
    s.w = r.u16();
    s.c = r.u16();
    const auto dtype = r.u8();
    const int fl = r.i8();
    if (s.size() == 0) throw FormatError("SQT0: zero-sized tensor");
    AnyMap out;
    if (dtype == static_cast<std::uint8_t>(DType::Int8)) {
        r.need(s.size());
        std::vector<std::int8_t> data(s.size());
        for (auto& v : data) v = r.i8();
        out = QMap(s, std::move(data), FxpFormat{8, fl});
    } else if (dtype == static_cast<std::uint8_t>(DType::Real32)) {
        r.need(s.size() * 4);
        std::vector<float> data(s.size());
        for (auto& v : data) v = r.f32();
        out = RMap(s, std::move(data));
    } else {
        throw FormatError("SQT0: unknown dtype " + std::to_string(dtype));
    }
    if (!r.done()) throw FormatError("SQT0: trailing bytes after payload");
    return out;
}

QMap read_qtensor(std::span<const std::uint8_t> bytes, Shape expected) {
    auto any = read_tensor(bytes);
    if (!std::holds_alternative<QMap>(any)) {
        throw FormatError("SQT0: dtype is real32, expected int8");
    }
    auto m = std::get<QMap>(std::move(any));
    check_shape(m.shape(), expected);
    return m;
}

RMap read_rtensor(std::span<const std::uint8_t> bytes, Shape expected) {
    auto any = read_tensor(bytes);
    if (!std::holds_alternative<RMap>(any)) {
        throw FormatError("SQT0: dtype is int8, expected real32");
    }
    auto m = std::get<RMap>(std::move(any));
    check_shape(m.shape(), expected);
    return m;
}

Bytes read_file(const std::filesystem::path& p) {
    std::ifstream f(p, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + p.string());
    return Bytes(std::istreambuf_iterator<char>(f), {});
}

void write_file(const std::filesystem::path& p, std::span<const std::uint8_t> bytes) {
    std::ofstream f(p, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write " + p.string());
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw std::runtime_error("write failed for " + p.string());
}

std::string read_text(const std::filesystem::path& p) {
    auto b = read_file(p);
    return std::string(b.begin(), b.end());
}

void write_text(const std::filesystem::path& p, const std::string& text) {
    write_file(p, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

}  // namespace sqj
