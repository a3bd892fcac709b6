#pragma once

#include <algorithm>
#include <numeric>
#include <vector>

#include <qcat/fock.hpp>

#include <Eigen/Eigenvalues>
#include <Eigen/Sparse>

#if defined(QCAT_HAVE_LAPACKE)
#define LAPACK_COMPLEX_CUSTOM
#define lapack_complex_float std::complex<float>
#define lapack_complex_double std::complex<double>
#include <lapacke.h>
#endif

namespace qcat {

// Eigen-decomposition of a Hermitian operator, eigenvalues ascending.
// Computed once per Hamiltonian and reused across a whole time grid.
struct SpectralDecomposition {
    Eigen::VectorXd eigenvalues;
    Matrix eigenvectors; // columns, unitary

    int dim() const { return static_cast<int>(eigenvalues.size()); }
};

inline SpectralDecomposition decompose(const Operator& h) {
    if (!h.hermitian)
        throw std::invalid_argument("decompose: operator must carry the hermitian flag");
    const int n = h.dim();

    // Strictly diagonal matrices (the uncoupled Hamiltonian, and the averaged
    // coupling whenever the spectrum is nondegenerate) get an exact sorted
    // permutation basis instead of an O(n^3) solve.
    bool diagonal = true;
    for (int j = 0; j < n && diagonal; ++j)
        for (int i = 0; i < n; ++i)
            if (i != j && h.mat(i, j) != complex(0.0, 0.0)) { diagonal = false; break; }
    if (diagonal) {
        std::vector<int> idx(n);
        std::iota(idx.begin(), idx.end(), 0);
        std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
            return std::real(h.mat(a, a)) < std::real(h.mat(b, b));
        });
        SpectralDecomposition s;
        s.eigenvalues.resize(n);
        s.eigenvectors = Matrix::Zero(n, n);
        for (int k = 0; k < n; ++k) {
            s.eigenvalues(k) = std::real(h.mat(idx[k], idx[k]));
            s.eigenvectors(idx[k], k) = 1.0;
        }
        return s;
    }

#if defined(QCAT_HAVE_LAPACKE)
    SpectralDecomposition s;
    s.eigenvalues.resize(n);
    s.eigenvectors = h.mat; // column-major, overwritten with eigenvectors
    const int info = LAPACKE_zheevd(LAPACK_COL_MAJOR, 'V', 'L', n,
                                    s.eigenvectors.data(), n, s.eigenvalues.data());
    if (info != 0)
        throw std::runtime_error("decompose: zheevd failed with info " + std::to_string(info));
    return s;
#else
    Eigen::SelfAdjointEigenSolver<Matrix> es(h.mat);
    if (es.info() != Eigen::Success)
        throw std::runtime_error("decompose: eigensolver did not converge");
    return SpectralDecomposition{es.eigenvalues(), es.eigenvectors()};
#endif
}

// exp(-i H t / hbar) applied through the spectral data.
inline StateVector evolve(const SpectralDecomposition& s, const StateVector& psi0,
                          double t, double hbar) {
    Vector c = s.eigenvectors.adjoint() * psi0.amp;
    for (int k = 0; k < s.dim(); ++k)
        c(k) *= std::exp(complex(0.0, -s.eigenvalues(k) * t / hbar));
    return StateVector{s.eigenvectors * c};
}

// Echo operator M(t) = exp(+i H0 t/hbar) exp(-i H t/hbar).
inline StateVector echo_evolve(const SpectralDecomposition& s_h, const SpectralDecomposition& s_h0,
                               const StateVector& psi0, double t, double hbar) {
    return evolve(s_h0, evolve(s_h, psi0, t, hbar), -t, hbar);
}

// Leading-order echo exp(-i delta t Vbar / hbar), driven by the spectral data
// of the time-averaged coupling.
inline StateVector effective_echo_evolve(const SpectralDecomposition& s_vbar, const StateVector& psi0,
                                         double t, double delta, double hbar) {
    return evolve(s_vbar, psi0, delta * t, hbar);
}

// Short-time Krylov propagation for composite dimensions where the dense
// decomposition is too expensive.  Lanczos with full reorthogonalization;
// the substep is shrunk until the standard residual estimate
// beta_m |[exp(-i tau T)]_{m,1}| drops below tol.
class KrylovPropagator {
public:
    using Sparse = Eigen::SparseMatrix<complex>;

    KrylovPropagator(Sparse h, double hbar, double tol = 1e-11, int max_krylov = 30)
        : h_(std::move(h)), hbar_(hbar), tol_(tol), m_max_(max_krylov) {
        if (h_.rows() != h_.cols())
            throw std::invalid_argument("KrylovPropagator: matrix must be square");
        if (!(hbar > 0.0)) throw std::invalid_argument("KrylovPropagator: hbar must be > 0");
        // Gershgorin bound on ||H/hbar|| to seed the substep size.
        Eigen::VectorXd rowsum = Eigen::VectorXd::Zero(h_.rows());
        for (int k = 0; k < h_.outerSize(); ++k)
            for (Sparse::InnerIterator it(h_, k); it; ++it)
                rowsum(it.row()) += std::abs(it.value());
        norm_bound_ = rowsum.maxCoeff() / hbar_;
    }

    // Advance psi in place by dt (several substeps if needed); the state is
    // renormalized after each substep, so unitarity holds by construction and
    // the tolerance only controls phase/shape error.
    void step(Vector& psi, double dt) const {
        if (dt == 0.0) return;
        double remaining = dt;
        const double sign = remaining > 0 ? 1.0 : -1.0;
        remaining = std::abs(remaining);
        // A Krylov space of size m_max_ comfortably covers phase ~4 per step.
        double tau = std::min(remaining, 4.0 / std::max(norm_bound_, 1e-12));
        while (remaining > 0.0) {
            tau = std::min(tau, remaining);
            const int n = static_cast<int>(psi.size());
            Matrix basis(n, m_max_);
            std::vector<double> alpha, beta;
            basis.col(0) = psi / psi.norm();
            int m = m_max_;
            bool happy = false;
            for (int j = 0; j < m_max_; ++j) {
                Vector w = (h_ * basis.col(j)) / hbar_;
                const double a = std::real(complex(basis.col(j).adjoint() * w));
                alpha.push_back(a);
                w -= a * basis.col(j);
                if (j > 0) w -= beta[j - 1] * basis.col(j - 1);
                // One full reorthogonalization pass keeps the basis clean at
                // these subspace sizes.
                w -= basis.leftCols(j + 1) * (basis.leftCols(j + 1).adjoint() * w);
                const double b = w.norm();
                beta.push_back(b);
                if (b < 1e-14) { m = j + 1; happy = true; break; }
                if (j + 1 < m_max_) basis.col(j + 1) = w / b;
            }
            Eigen::MatrixXd t_mat = Eigen::MatrixXd::Zero(m, m);
            for (int j = 0; j < m; ++j) {
                t_mat(j, j) = alpha[j];
                if (j + 1 < m) t_mat(j, j + 1) = t_mat(j + 1, j) = beta[j];
            }
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(t_mat);
            while (true) {
                Vector u = Vector::Zero(m);
                for (int k = 0; k < m; ++k) {
                    complex acc(0.0, 0.0);
                    for (int l = 0; l < m; ++l)
                        acc += es.eigenvectors()(k, l) *
                               std::exp(complex(0.0, -sign * es.eigenvalues()(l) * tau)) *
                               es.eigenvectors()(0, l);
                    u(k) = acc;
                }
                const double err = happy ? 0.0 : beta[m - 1] * std::abs(u(m - 1));
                if (err <= tol_ || tau <= 1e-15 * std::abs(dt)) {
                    psi = basis.leftCols(m) * u;
                    psi /= psi.norm();
                    remaining -= tau;
                    if (err < 0.1 * tol_) tau *= 1.4;
                    break;
                }
                tau *= 0.5;
            }
        }
    }

    double norm_bound() const { return norm_bound_; }

private:
    Sparse h_;
    double hbar_;
    double tol_;
    int m_max_;
    double norm_bound_ = 0.0;
};

} // namespace qcat
