// SPDX-License-Identifier: Apache-2.0
//
// Dense row-major tensor used by the reverse-mode tape. Double precision
// throughout; the gradient-check tolerances in the test suite assume it.

#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace dfr::diff {

using Real = double;

/// Structured shape error thrown by tape primitives. Carries the primitive
/// name and the offending shapes in addition to the formatted message.
class ShapeError : public std::runtime_error {
public:
    ShapeError(std::string primitive, std::vector<int> lhs, std::vector<int> rhs);

    const std::string& primitive() const { return primitive_; }
    const std::vector<int>& lhs() const { return lhs_; }
    const std::vector<int>& rhs() const { return rhs_; }

private:
    std::string primitive_;
    std::vector<int> lhs_;
    std::vector<int> rhs_;
};

std::string shape_str(const std::vector<int>& shape);

/// Dense tensor. `values.size()` always equals the product of `shape`;
/// scalars use shape {1}.
struct Tensor {
    std::vector<int> shape;
    std::vector<Real> values;
    bool requires_grad = false;

    Tensor() = default;
    Tensor(std::vector<int> shp, std::vector<Real> vals);

    static Tensor zeros(std::vector<int> shape);
    static Tensor full(std::vector<int> shape, Real value);
    static Tensor scalar(Real value);
    static Tensor vector(std::vector<Real> vals);
    static Tensor matrix(int rows, int cols, std::vector<Real> vals);

    std::size_t numel() const { return values.size(); }
    int rank() const { return static_cast<int>(shape.size()); }
    int rows() const { return shape.empty() ? 1 : shape[0]; }
    int cols() const;
    bool is_scalar() const { return numel() == 1; }

    Real& at(int i) { return values[static_cast<std::size_t>(i)]; }
    Real at(int i) const { return values[static_cast<std::size_t>(i)]; }
    Real& at(int r, int c);
    Real at(int r, int c) const;

    bool same_shape(const Tensor& other) const { return shape == other.shape; }
    bool all_finite() const;

    Tensor& set_requires_grad(bool flag) {
        requires_grad = flag;
        return *this;
    }
};

}  // namespace dfr::diff
