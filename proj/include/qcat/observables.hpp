#pragma once

#include <qcat/fock.hpp>

namespace qcat {

// Reduced density matrices of a pure composite state in the central-major
// layout k = n_c * N_e + n_e.  The amplitude vector reshapes column-major to
// an (N_e x N_c) matrix, so both reductions are single Gram products.
inline DensityMatrix reduced_central(const StateVector& psi, int nc, int ne) {
    if (static_cast<long>(nc) * ne != psi.amp.size())
        throw std::invalid_argument("reduced_central: state size does not match nc * ne");
    Eigen::Map<const Matrix> m(psi.amp.data(), ne, nc);
    Matrix rho = (m.adjoint() * m).transpose();
    return DensityMatrix{std::move(rho)};
}

inline DensityMatrix reduced_environment(const StateVector& psi, int nc, int ne) {
    if (static_cast<long>(nc) * ne != psi.amp.size())
        throw std::invalid_argument("reduced_environment: state size does not match nc * ne");
    Eigen::Map<const Matrix> m(psi.amp.data(), ne, nc);
    Matrix rho = m * m.adjoint();
    return DensityMatrix{std::move(rho)};
}

// Tr rho^2 for Hermitian rho reduces to the squared Frobenius norm.
inline double purity(const DensityMatrix& rho) { return rho.mat.squaredNorm(); }

// Re Tr(rho1 rho2); equals the fidelity-like overlap used for echo purities.
inline double cross_purity(const DensityMatrix& r1, const DensityMatrix& r2) {
    if (r1.mat.rows() != r2.mat.rows())
        throw std::invalid_argument("cross_purity: dimension mismatch");
    return std::real(r1.mat.cwiseProduct(r2.mat.conjugate()).sum());
}

inline complex expectation(const DensityMatrix& rho, const Matrix& op) {
    if (rho.mat.rows() != op.rows())
        throw std::invalid_argument("expectation: dimension mismatch");
    return op.transpose().cwiseProduct(rho.mat).sum();
}

// Population of the top `levels` basis states; the truncation health metric.
inline double top_population(const DensityMatrix& rho, int levels = 3) {
    const int n = static_cast<int>(rho.mat.rows());
    double p = 0.0;
    for (int k = std::max(0, n - levels); k < n; ++k) p += std::real(rho.mat(k, k));
    return p;
}

// Matrix elements <m|D(beta)|n> of the displacement operator on the truncated
// ladder: the untruncated values projected onto the box, so no cutoff error
// enters beyond what the state itself leaks.
//
// Each diagonal family m = n + a is e^{-x/2} beta^a E_n with x = |beta|^2 and
// E_n = sqrt(n!/(n+a)!) L_n^a(x).  E is generated by its three-term
// recurrence in n, which only follows growing or neutral solutions; a
// row-by-row recurrence instead crosses classically forbidden zones where the
// true entries decay like e^{-x/2} and roundoff gets amplified by e^{x/2}.
// |E_n| peaks near e^{x/2}, so x up to ~1200 stays clear of overflow.
inline Matrix displacement_matrix(int levels, complex beta) {
    if (levels < 1) throw std::invalid_argument("displacement_matrix: levels must be positive");
    const double x = std::norm(beta);
    Matrix d(levels, levels);
    if (x == 0.0) return Matrix::Identity(levels, levels);

    const double lb = std::log(std::abs(beta));
    const double ab = std::arg(beta);
    std::vector<double> e(levels);
    for (int a = 0; a < levels; ++a) {
        const int count = levels - a;
        e[0] = std::exp(-0.5 * std::lgamma(a + 1.0));
        if (count > 1) e[1] = (1.0 + a - x) * e[0] / std::sqrt(a + 1.0);
        for (int n = 1; n + 1 < count; ++n)
            e[n + 1] = ((2.0 * n + 1.0 + a - x) * e[n] -
                        std::sqrt(static_cast<double>(n) * (n + a)) * e[n - 1]) /
                       std::sqrt(static_cast<double>(n + 1) * (n + 1 + a));
        const double mag = std::exp(-0.5 * x + a * lb);
        const complex lower = std::polar(mag, a * ab);
        const complex upper = (a % 2 ? -1.0 : 1.0) * std::polar(mag, -a * ab);
        for (int n = 0; n < count; ++n) {
            d(n + a, n) = lower * e[n];
            d(n, n + a) = upper * e[n];
        }
    }
    return d;
}

// Wigner function sampled on a rectangular grid of the scaled quadratures
// x = sqrt(2 hbar) Re(alpha), y = sqrt(2 hbar) Im(alpha).  w(i, j) holds the
// value at (x(i), y(j)).
struct WignerGrid {
    Eigen::VectorXd x;
    Eigen::VectorXd y;
    Eigen::MatrixXd w;
    double hbar = 1.0;
};

// W(alpha) = (2/pi) Tr[rho D(2 alpha) P] with P the parity operator.  The
// state must live inside the box: population of the top three levels above
// tail_tol aborts rather than sampling a clipped quasi-distribution.
inline WignerGrid wigner(const DensityMatrix& rho, double hbar, const Eigen::VectorXd& x,
                         const Eigen::VectorXd& y, double tail_tol = 1e-6) {
    if (hbar <= 0.0) throw std::invalid_argument("wigner: hbar must be positive");
    const int n = static_cast<int>(rho.mat.rows());
    const double tail = top_population(rho, std::min(3, n));
    if (n >= 4 && tail >= tail_tol)
        throw TruncationError("wigner: top-level population " + std::to_string(tail) +
                              " exceeds tail tolerance; enlarge the basis");

    // G[m, n] = rho[n, m] (-1)^n so each sample is an elementwise contraction.
    Matrix g = rho.mat.transpose();
    for (int c = 1; c < n; c += 2) g.col(c) = -g.col(c);

    WignerGrid grid;
    grid.x = x;
    grid.y = y;
    grid.hbar = hbar;
    grid.w.resize(x.size(), y.size());
    const double s = 1.0 / std::sqrt(2.0 * hbar);
    for (int i = 0; i < x.size(); ++i)
        for (int j = 0; j < y.size(); ++j) {
            const complex beta = 2.0 * s * complex(x(i), y(j));
            Matrix d = displacement_matrix(n, beta);
            grid.w(i, j) = 2.0 / M_PI * std::real(g.cwiseProduct(d).sum());
        }
    return grid;
}

namespace detail {
inline double trapezoid_spacing(const Eigen::VectorXd& v, const char* what) {
    if (v.size() < 2) throw std::invalid_argument(std::string(what) + ": need at least 2 points");
    return (v(v.size() - 1) - v(0)) / static_cast<double>(v.size() - 1);
}
} // namespace detail

// Integral of W over the phase plane, d^2alpha = dx dy / (2 hbar); unit for a
// unit-trace state once the grid captures the support.
inline double wigner_integral(const WignerGrid& g) {
    const double dx = detail::trapezoid_spacing(g.x, "wigner_integral x");
    const double dy = detail::trapezoid_spacing(g.y, "wigner_integral y");
    double acc = 0.0;
    for (int i = 0; i < g.x.size(); ++i)
        for (int j = 0; j < g.y.size(); ++j) {
            const double cw = ((i == 0 || i + 1 == g.x.size()) ? 0.5 : 1.0) *
                              ((j == 0 || j + 1 == g.y.size()) ? 0.5 : 1.0);
            acc += cw * g.w(i, j);
        }
    return acc * dx * dy / (2.0 * g.hbar);
}

// pi integral of W^2 over d^2alpha; reproduces Tr rho^2 on a converged grid.
inline double wigner_purity(const WignerGrid& g) {
    const double dx = detail::trapezoid_spacing(g.x, "wigner_purity x");
    const double dy = detail::trapezoid_spacing(g.y, "wigner_purity y");
    double acc = 0.0;
    for (int i = 0; i < g.x.size(); ++i)
        for (int j = 0; j < g.y.size(); ++j) {
            const double cw = ((i == 0 || i + 1 == g.x.size()) ? 0.5 : 1.0) *
                              ((j == 0 || j + 1 == g.y.size()) ? 0.5 : 1.0);
            acc += cw * g.w(i, j) * g.w(i, j);
        }
    return M_PI * acc * dx * dy / (2.0 * g.hbar);
}

} // namespace qcat
