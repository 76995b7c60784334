#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace cdanet {

using Shape = std::vector<int>;

inline std::size_t shape_numel(const Shape& s) {
    std::size_t n = 1;
    for (int d : s) {
        if (d < 0) throw std::invalid_argument("negative dimension in shape");
        n *= static_cast<std::size_t>(d);
    }
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '(';
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
    os << ')';
    return os.str();
}

/// Spatial extent of a volume in canonical (D,H,W) order.
struct Grid3 {
    int d = 0, h = 0, w = 0;
    std::size_t numel() const { return std::size_t(d) * h * w; }
    bool operator==(const Grid3&) const = default;
};

inline std::string grid_str(const Grid3& g) {
    return std::to_string(g.d) + "x" + std::to_string(g.h) + "x" + std::to_string(g.w);
}

/// Dense row-major array. Rank-3 tensors hold (D,H,W) volumes, rank-4 tensors
/// hold (C,D,H,W) channel stacks and feature maps.
template <class T>
class Tensor {
public:
    using value_type = T;

    Tensor() = default;
    explicit Tensor(Shape shape, T fill = T{}) : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {}
    Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
        if (data_.size() != shape_numel(shape_))
            throw std::invalid_argument("tensor data size does not match shape " + shape_str(shape_));
    }

    static Tensor volume(Grid3 g, T fill = T{}) { return Tensor({g.d, g.h, g.w}, fill); }
    static Tensor stack(int c, Grid3 g, T fill = T{}) { return Tensor({c, g.d, g.h, g.w}, fill); }

    const Shape& shape() const { return shape_; }
    int rank() const { return static_cast<int>(shape_.size()); }
    int dim(int i) const { return shape_.at(static_cast<std::size_t>(i)); }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }
    std::span<T> values() { return data_; }
    std::span<const T> values() const { return data_; }
    std::vector<T>& storage() { return data_; }
    const std::vector<T>& storage() const { return data_; }

    T& operator[](std::size_t i) { return data_[i]; }
    const T& operator[](std::size_t i) const { return data_[i]; }

    /// Trailing three dimensions as a grid; valid for rank 3 and rank 4.
    Grid3 grid() const {
        if (rank() < 3) throw std::logic_error("tensor has no spatial grid: " + shape_str(shape_));
        const auto r = shape_.size();
        return {shape_[r - 3], shape_[r - 2], shape_[r - 1]};
    }
    int channels() const { return rank() == 4 ? shape_[0] : 1; }

    T& at(int d, int h, int w) { return data_[index(d, h, w)]; }
    const T& at(int d, int h, int w) const { return data_[index(d, h, w)]; }
    T& at(int c, int d, int h, int w) { return data_[index(c, d, h, w)]; }
    const T& at(int c, int d, int h, int w) const { return data_[index(c, d, h, w)]; }

    std::size_t index(int d, int h, int w) const {
        const auto r = shape_.size();
        return (std::size_t(d) * shape_[r - 2] + h) * shape_[r - 1] + w;
    }
    std::size_t index(int c, int d, int h, int w) const {
        return ((std::size_t(c) * shape_[1] + d) * shape_[2] + h) * shape_[3] + w;
    }

    /// View of one channel of a rank-4 tensor.
    std::span<T> channel(int c) {
        const std::size_t n = grid().numel();
        return {data_.data() + std::size_t(c) * n, n};
    }
    std::span<const T> channel(int c) const {
        const std::size_t n = grid().numel();
        return {data_.data() + std::size_t(c) * n, n};
    }

    Tensor reshaped(Shape s) const& {
        if (shape_numel(s) != size()) throw std::invalid_argument("reshape to " + shape_str(s) + " changes element count");
        return Tensor(std::move(s), data_);
    }
    Tensor reshaped(Shape s) && {
        if (shape_numel(s) != size()) throw std::invalid_argument("reshape to " + shape_str(s) + " changes element count");
        return Tensor(std::move(s), std::move(data_));
    }

    void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

    template <class U>
    Tensor<U> cast() const {
        Tensor<U> out(shape_);
        std::transform(data_.begin(), data_.end(), out.data(), [](T v) { return static_cast<U>(v); });
        return out;
    }

    bool operator==(const Tensor&) const = default;

private:
    Shape shape_;
    std::vector<T> data_;
};

template <class T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* what) {
    if (a.shape() != b.shape())
        throw std::invalid_argument(std::string(what) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                                    shape_str(b.shape()));
}

template <class T>
bool all_finite(const Tensor<T>& t) {
    return std::all_of(t.values().begin(), t.values().end(), [](T v) { return std::isfinite(v); });
}

template <class T>
T max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
    require_same_shape(a, b, "max_abs_diff");
    T m = 0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, static_cast<T>(std::abs(a[i] - b[i])));
    return m;
}

}  // namespace cdanet
