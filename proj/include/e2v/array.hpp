#pragma once

#include <cassert>
#include <cstddef>
#include <initializer_list>
#include <vector>

namespace e2v {

// Dense row-major f64 array. The whole pipeline runs in double precision so
// finite-difference gradient checks are meaningful and checkpoints are
// bit-reproducible.
class Array {
public:
    Array() = default;
    explicit Array(std::vector<int> shape, double fill = 0.0);
    Array(std::initializer_list<int> shape, double fill = 0.0)
        : Array(std::vector<int>(shape), fill) {}

    static Array from_data(std::vector<int> shape, std::vector<double> data);

    const std::vector<int>& shape() const { return shape_; }
    int dim(int i) const { return shape_[static_cast<std::size_t>(i)]; }
    int ndim() const { return static_cast<int>(shape_.size()); }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& vec() { return data_; }
    const std::vector<double>& vec() const { return data_; }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    // (h, w) indexing for 2-d arrays.
    double& at(int h, int w) {
        return data_[static_cast<std::size_t>(h) * shape_[1] + w];
    }
    double at(int h, int w) const {
        return data_[static_cast<std::size_t>(h) * shape_[1] + w];
    }

    // (c, h, w) indexing for 3-d arrays.
    double& at(int c, int h, int w) {
        return data_[(static_cast<std::size_t>(c) * shape_[1] + h) * shape_[2] + w];
    }
    double at(int c, int h, int w) const {
        return data_[(static_cast<std::size_t>(c) * shape_[1] + h) * shape_[2] + w];
    }

    // (n, c, h, w) indexing for 4-d arrays.
    double& at(int n, int c, int h, int w) {
        return data_[((static_cast<std::size_t>(n) * shape_[1] + c) * shape_[2] + h) *
                         shape_[3] + w];
    }
    double at(int n, int c, int h, int w) const {
        return data_[((static_cast<std::size_t>(n) * shape_[1] + c) * shape_[2] + h) *
                         shape_[3] + w];
    }

    void fill(double v);
    bool same_shape(const Array& other) const { return shape_ == other.shape_; }
    bool all_finite() const;

    double sum() const;
    double min() const;
    double max() const;

private:
    std::vector<int> shape_;
    std::vector<double> data_;
};

std::size_t shape_numel(const std::vector<int>& shape);

}  // namespace e2v
