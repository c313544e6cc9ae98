#pragma once

#include <functional>

#include "derivfair/derivfair.hpp"

namespace testutil {

using derivfair::Matrix;
using derivfair::Vector;

inline Matrix random_matrix(derivfair::Rng& rng, Eigen::Index r, Eigen::Index c, double sd = 1.0) {
    Matrix m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal(0.0, sd);
    return m;
}

/// Central differences of f over every coordinate of x.
inline Vector central_diff(const std::function<double(const Vector&)>& f, Vector x, double h) {
    Vector g(x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        const double keep = x[i];
        x[i] = keep + h;
        const double up = f(x);
        x[i] = keep - h;
        const double down = f(x);
        x[i] = keep;
        g[i] = (up - down) / (2.0 * h);
    }
    return g;
}

inline double rel_err(const Vector& a, const Vector& b) {
    const double scale = std::max({a.norm(), b.norm(), 1e-12});
    return (a - b).norm() / scale;
}

/// Row-major flattening, the layout used for parameter blocks.
inline Vector flatten(const Matrix& m) {
    Vector v(m.size());
    Eigen::Index k = 0;
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) v[k++] = m(r, c);
    return v;
}

inline Matrix unflatten(const Vector& v, Eigen::Index rows, Eigen::Index cols, Eigen::Index offset = 0) {
    Matrix m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = v[offset + r * cols + c];
    return m;
}

}  // namespace testutil
