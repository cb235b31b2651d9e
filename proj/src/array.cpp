#include "e2v/array.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace e2v {

std::size_t shape_numel(const std::vector<int>& shape) {
    std::size_t n = 1;
    for (int d : shape) {
        if (d < 0) throw std::invalid_argument("negative array dimension");
        n *= static_cast<std::size_t>(d);
    }
    return n;
}

Array::Array(std::vector<int> shape, double fill)
    : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {}

Array Array::from_data(std::vector<int> shape, std::vector<double> data) {
    if (shape_numel(shape) != data.size()) {
        throw std::invalid_argument("array data does not match shape");
    }
    Array a;
    a.shape_ = std::move(shape);
    a.data_ = std::move(data);
    return a;
}

void Array::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Array::all_finite() const {
    for (double v : data_) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

double Array::sum() const {
    double s = 0.0;
    for (double v : data_) s += v;
    return s;
}

double Array::min() const {
    return data_.empty() ? 0.0 : *std::min_element(data_.begin(), data_.end());
}

double Array::max() const {
    return data_.empty() ? 0.0 : *std::max_element(data_.begin(), data_.end());
}

}  // namespace e2v
