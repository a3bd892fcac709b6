#pragma once

#include <cmath>
#include <complex>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>

#include <Eigen/Dense>

namespace qcat {

using complex = std::complex<double>;
using Matrix = Eigen::MatrixXcd;
using Vector = Eigen::VectorXcd;

// Thrown when a truncated Fock space cannot represent a requested state to
// the demanded tail tolerance, or when an evolved or displaced state runs
// into the cutoff.
class TruncationError : public std::runtime_error {
public:
    explicit TruncationError(const std::string& msg) : std::runtime_error(msg) {}
};

// One bosonic mode truncated to Fock states |0>..|levels-1>.  hbar is the
// effective Planck constant shared by every operator built on the basis;
// combining bases with different hbar is rejected by the model builders.
struct ModeBasis {
    int levels;
    double hbar;
    std::string label;

    ModeBasis(int levels_, double hbar_, std::string label_)
        : levels(levels_), hbar(hbar_), label(std::move(label_)) {
        if (levels < 2) throw std::invalid_argument("ModeBasis(" + label + "): levels must be >= 2");
        if (!(hbar > 0.0)) throw std::invalid_argument("ModeBasis(" + label + "): hbar must be > 0");
        if (label.empty()) throw std::invalid_argument("ModeBasis: label must be nonempty");
    }
};

struct Operator {
    Matrix mat;
    bool hermitian = false;

    int dim() const { return static_cast<int>(mat.rows()); }

    static Operator make(Matrix m) { return Operator{std::move(m), false}; }

    // Wraps m with the hermitian flag set; max |m - m^dag| must not exceed
    // 1e-12 relative to the largest entry.
    static Operator make_hermitian(Matrix m) {
        const double scale = m.cwiseAbs().maxCoeff();
        const double defect = (m - m.adjoint()).cwiseAbs().maxCoeff();
        if (defect > 1e-12 * std::max(scale, 1e-300))
            throw std::invalid_argument("Operator::make_hermitian: hermiticity defect " +
                                        std::to_string(defect) + " exceeds tolerance");
        return Operator{std::move(m), true};
    }
};

struct StateVector {
    Vector amp;

    int dim() const { return static_cast<int>(amp.size()); }
    double norm_error() const { return std::abs(amp.squaredNorm() - 1.0); }
};

struct DensityMatrix {
    Matrix mat;

    int dim() const { return static_cast<int>(mat.rows()); }
    double trace_error() const { return std::abs(mat.trace() - complex(1.0, 0.0)); }
    double hermiticity_defect() const { return (mat - mat.adjoint()).cwiseAbs().maxCoeff(); }
};

// a |n> = sqrt(n) |n-1>
inline Operator ladder_down(const ModeBasis& b) {
    Matrix a = Matrix::Zero(b.levels, b.levels);
    for (int n = 1; n < b.levels; ++n) a(n - 1, n) = std::sqrt(double(n));
    return Operator::make(std::move(a));
}

inline Operator ladder_up(const ModeBasis& b) {
    Matrix a = Matrix::Zero(b.levels, b.levels);
    for (int n = 1; n < b.levels; ++n) a(n, n - 1) = std::sqrt(double(n));
    return Operator::make(std::move(a));
}

inline Operator number_op(const ModeBasis& b) {
    Matrix n = Matrix::Zero(b.levels, b.levels);
    for (int k = 0; k < b.levels; ++k) n(k, k) = double(k);
    return Operator{std::move(n), true};
}

// x-like quadrature a^dag + a (dimensionless; physical x is sqrt(hbar/2) of it
// in the convention used by the Wigner axes).
inline Operator quadrature_op(const ModeBasis& b) {
    Matrix x = Matrix::Zero(b.levels, b.levels);
    for (int n = 1; n < b.levels; ++n) {
        x(n - 1, n) = std::sqrt(double(n));
        x(n, n - 1) = std::sqrt(double(n));
    }
    return Operator{std::move(x), true};
}

inline Operator identity_op(int dim) {
    return Operator{Matrix::Identity(dim, dim), true};
}

// Coherent state with amplitudes e^{-|alpha|^2/2} alpha^n / sqrt(n!).
// The Poisson weight dropped by the cutoff must stay below tail_tol; the
// amplitudes are kept as-is (no renormalization), so the norm deficit equals
// the tail and the norm invariant holds whenever construction succeeds.
inline StateVector coherent_state(const ModeBasis& b, complex alpha, double tail_tol = 1e-10) {
    Vector amp(b.levels);
    const double a2 = std::norm(alpha);
    complex c = std::exp(complex(-0.5 * a2, 0.0));
    double got = 0.0;
    for (int n = 0; n < b.levels; ++n) {
        amp(n) = c;
        got += std::norm(c);
        c *= alpha / std::sqrt(double(n + 1));
    }
    const double tail = 1.0 - got;
    if (tail > tail_tol) {
        std::ostringstream os;
        os << "coherent_state(" << b.label << "): |alpha|^2 = " << a2 << " needs more than "
           << b.levels << " levels (tail " << tail << " > " << tail_tol << ")";
        throw TruncationError(os.str());
    }
    return StateVector{std::move(amp)};
}

// Composite index convention used everywhere: central-major,
// k = n_c * N_e + n_e.  tensor_op(A_c, B_e) and tensor_state follow it.
inline Operator tensor_op(const Operator& a, const Operator& b) {
    const int na = a.dim(), nb = b.dim();
    Matrix out(na * nb, na * nb);
    for (int i1 = 0; i1 < na; ++i1)
        for (int j1 = 0; j1 < na; ++j1)
            out.block(i1 * nb, j1 * nb, nb, nb) = a.mat(i1, j1) * b.mat;
    return Operator{std::move(out), a.hermitian && b.hermitian};
}

inline StateVector tensor_state(const StateVector& u, const StateVector& v) {
    const int nu = u.dim(), nv = v.dim();
    Vector out(nu * nv);
    for (int i = 0; i < nu; ++i) out.segment(i * nv, nv) = u.amp(i) * v.amp;
    return StateVector{std::move(out)};
}

} // namespace qcat
