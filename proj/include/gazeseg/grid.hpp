#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "gazeseg/error.hpp"

namespace gazeseg {

struct Dims {
    int w = 0;
    int h = 0;

    std::size_t area() const { return static_cast<std::size_t>(w) * static_cast<std::size_t>(h); }
    friend bool operator==(const Dims&, const Dims&) = default;
};

// Row-major W x H grid; (x, y) addresses column x of row y.
template <typename T>
class Grid {
   public:
    Grid() = default;
    Grid(Dims dims, T fill = T{}) : dims_(dims), data_(dims.area(), fill) {}
    Grid(Dims dims, std::vector<T> data) : dims_(dims), data_(std::move(data)) {
        if (data_.size() != dims_.area()) fail(ErrorCode::DimMismatch, "grid data size does not match dims");
    }

    Dims dims() const { return dims_; }
    int width() const { return dims_.w; }
    int height() const { return dims_.h; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    T& operator()(int x, int y) { return data_[static_cast<std::size_t>(y) * dims_.w + x]; }
    const T& operator()(int x, int y) const { return data_[static_cast<std::size_t>(y) * dims_.w + x]; }
    T& operator[](std::size_t i) { return data_[i]; }
    const T& operator[](std::size_t i) const { return data_[i]; }

    std::span<T> values() { return data_; }
    std::span<const T> values() const { return data_; }
    const std::vector<T>& raw() const { return data_; }

    friend bool operator==(const Grid&, const Grid&) = default;

   private:
    Dims dims_{};
    std::vector<T> data_;
};

using Image = Grid<double>;
using LabelMap = Grid<std::uint8_t>;
using Heatmap = Grid<double>;

}  // namespace gazeseg
