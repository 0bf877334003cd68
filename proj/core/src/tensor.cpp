// SPDX-License-Identifier: Apache-2.0

#include "dfr/tensor.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

namespace dfr::diff {

std::string shape_str(const std::vector<int>& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ',';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

ShapeError::ShapeError(std::string primitive, std::vector<int> lhs, std::vector<int> rhs)
    : std::runtime_error(primitive + ": shape mismatch " + shape_str(lhs) + " vs " + shape_str(rhs)),
      primitive_(std::move(primitive)),
      lhs_(std::move(lhs)),
      rhs_(std::move(rhs)) {}

namespace {
std::size_t shape_numel(const std::vector<int>& shape) {
    std::size_t n = 1;
    for (int d : shape) {
        if (d < 0) throw std::invalid_argument("tensor: negative dimension in " + shape_str(shape));
        n *= static_cast<std::size_t>(d);
    }
    return n;
}
}  // namespace

Tensor::Tensor(std::vector<int> shp, std::vector<Real> vals)
    : shape(std::move(shp)), values(std::move(vals)) {
    if (shape_numel(shape) != values.size())
        throw std::invalid_argument("tensor: " + std::to_string(values.size()) +
                                    " values do not fill shape " + shape_str(shape));
}

Tensor Tensor::zeros(std::vector<int> shape) {
    std::size_t n = shape_numel(shape);
    return Tensor(std::move(shape), std::vector<Real>(n, 0.0));
}

Tensor Tensor::full(std::vector<int> shape, Real value) {
    std::size_t n = shape_numel(shape);
    return Tensor(std::move(shape), std::vector<Real>(n, value));
}

Tensor Tensor::scalar(Real value) { return Tensor({1}, {value}); }

Tensor Tensor::vector(std::vector<Real> vals) {
    int n = static_cast<int>(vals.size());
    return Tensor({n}, std::move(vals));
}

Tensor Tensor::matrix(int rows, int cols, std::vector<Real> vals) {
    return Tensor({rows, cols}, std::move(vals));
}

int Tensor::cols() const {
    if (shape.size() < 2) return 1;
    int c = 1;
    for (std::size_t i = 1; i < shape.size(); ++i) c *= shape[i];
    return c;
}

Real& Tensor::at(int r, int c) { return values[static_cast<std::size_t>(r) * cols() + c]; }

Real Tensor::at(int r, int c) const { return values[static_cast<std::size_t>(r) * cols() + c]; }

bool Tensor::all_finite() const {
    for (Real v : values)
        if (!std::isfinite(v)) return false;
    return true;
}

}  // namespace dfr::diff
