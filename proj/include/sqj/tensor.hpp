#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "sqj/fxp.hpp"

namespace sqj {

struct Shape {
    int h = 0;
    int w = 0;
    int c = 0;

    std::size_t size() const {
        return static_cast<std::size_t>(h) * static_cast<std::size_t>(w) *
               static_cast<std::size_t>(c);
    }
    std::string str() const {
        return std::to_string(h) + "x" + std::to_string(w) + "x" + std::to_string(c);
    }
    friend bool operator==(const Shape&, const Shape&) = default;
};

class ShapeError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// H x W x C tensor stored channel-innermost (HWC). A "pixel" is the
/// C-length slice at (h, w). fmt is meaningful for the int8 variant only.
template <typename T>
class FeatureMap {
public:
    FeatureMap() = default;
    explicit FeatureMap(Shape shape, FxpFormat fmt = {}) : shape_(shape), fmt_(fmt) {
        if (shape.h <= 0 || shape.w <= 0 || shape.c <= 0) {
            throw ShapeError("feature map dims must be positive, got " + shape.str());
        }
        data_.assign(shape.size(), T{});
    }
    FeatureMap(Shape shape, std::vector<T> data, FxpFormat fmt = {})
        : shape_(shape), fmt_(fmt), data_(std::move(data)) {
        if (data_.size() != shape.size()) {
            throw ShapeError("feature map payload has " + std::to_string(data_.size()) +
                             " elements, shape " + shape.str() + " needs " +
                             std::to_string(shape.size()));
        }
    }

    const Shape& shape() const { return shape_; }
    int height() const { return shape_.h; }
    int width() const { return shape_.w; }
    int channels() const { return shape_.c; }
    std::size_t size() const { return data_.size(); }

    const FxpFormat& fmt() const { return fmt_; }
    void set_fmt(FxpFormat f) { fmt_ = f; }

    std::size_t index(int h, int w, int c) const {
        return (static_cast<std::size_t>(h) * static_cast<std::size_t>(shape_.w) +
                static_cast<std::size_t>(w)) * static_cast<std::size_t>(shape_.c) +
               static_cast<std::size_t>(c);
    }
    T& at(int h, int w, int c) { return data_[index(h, w, c)]; }
    const T& at(int h, int w, int c) const { return data_[index(h, w, c)]; }

    std::span<T> pixel(int h, int w) {
        return std::span<T>(data_).subspan(index(h, w, 0), static_cast<std::size_t>(shape_.c));
    }
    std::span<const T> pixel(int h, int w) const {
        return std::span<const T>(data_).subspan(index(h, w, 0),
                                                 static_cast<std::size_t>(shape_.c));
    }

    std::span<T> data() { return data_; }
    std::span<const T> data() const { return data_; }
    std::vector<T>& storage() { return data_; }

    friend bool operator==(const FeatureMap& a, const FeatureMap& b) {
        return a.shape_ == b.shape_ && a.data_ == b.data_;
    }

private:
    Shape shape_;
    FxpFormat fmt_;
    std::vector<T> data_;
};

using QMap = FeatureMap<std::int8_t>;
using RMap = FeatureMap<float>;

QMap quantize_map(const RMap& m, FxpFormat fmt);
RMap dequantize_map(const QMap& m);

}  // namespace sqj
