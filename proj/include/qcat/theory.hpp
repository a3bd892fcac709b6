#pragma once

#include <qcat/fock.hpp>

#include <Eigen/Cholesky>

namespace qcat {

// Squared-gradient dephasing strength in the classical action picture: the
// two branches drag the environment frequency apart at a rate set by how the
// averaged coupling slope differs between them, weighted by the packet
// covariance.  General form 0.5 * dg^T lambda_e^{-1} dg.
inline double dephasing_strength_classical(const Eigen::VectorXd& grad_diff,
                                           const Eigen::MatrixXd& lambda_e) {
    if (lambda_e.rows() != lambda_e.cols() || lambda_e.rows() != grad_diff.size())
        throw std::invalid_argument("dephasing_strength_classical: dimension mismatch");
    Eigen::LDLT<Eigen::MatrixXd> ldlt(lambda_e);
    if (ldlt.info() != Eigen::Success)
        throw std::invalid_argument("dephasing_strength_classical: lambda_e not factorizable");
    return 0.5 * grad_diff.dot(ldlt.solve(grad_diff));
}

// Scalar wrapper for the single-mode model: grad difference 4 (j_c1 - j_c2),
// packet width lambda_e = 1/(2 j_e), giving 16 j_e (j_c1 - j_c2)^2.
inline double dephasing_strength_classical(double j_c1, double j_c2, double j_e) {
    Eigen::VectorXd g(1);
    g(0) = 4.0 * (j_c1 - j_c2);
    Eigen::MatrixXd le(1, 1);
    le(0, 0) = 1.0 / (2.0 * j_e);
    return dephasing_strength_classical(g, le);
}

// Operator form of the dephasing strength for two branch states |c1>, |c2>
// sharing the environment packet |e>:
//
//   hbar * C = T1 + T2 + 2 v1 v2 - <e| B1 B2 + B2 B1 |e>
//
// with A the environment contraction of the coupling (acting on the central
// mode), B_i the central contractions (acting on the environment),
// T_i = ||(V - A (x) 1)(c_i (x) e)||^2 and v_i = <e|B_i|e>.  For a product
// coupling X (x) Y this reduces to
// [ (<X>_1 - <X>_2)^2 + Var_1 X + Var_2 X ] Var_e Y / hbar, so equal branches
// keep the individual-variance part while a pure central operator gives zero.
inline double dephasing_strength(const Operator& coupling, const StateVector& c1,
                                 const StateVector& c2, const StateVector& e, double hbar) {
    if (!coupling.hermitian)
        throw std::invalid_argument("dephasing_strength: coupling must be hermitian");
    if (hbar <= 0.0) throw std::invalid_argument("dephasing_strength: hbar must be positive");
    const int nc = static_cast<int>(c1.amp.size());
    const int ne = static_cast<int>(e.amp.size());
    if (c2.amp.size() != nc) throw std::invalid_argument("dephasing_strength: branch size mismatch");
    if (coupling.dim() != nc * ne)
        throw std::invalid_argument("dephasing_strength: coupling dimension mismatch");
    const Matrix& v = coupling.mat;

    // Environment contraction A and central contractions B1, B2 in one pass
    // over the blocks V[(m,p),(n,q)].
    Matrix a = Matrix::Zero(nc, nc);
    Matrix b1 = Matrix::Zero(ne, ne);
    Matrix b2 = Matrix::Zero(ne, ne);
    for (int m = 0; m < nc; ++m)
        for (int n = 0; n < nc; ++n) {
            const auto block = v.block(m * ne, n * ne, ne, ne);
            a(m, n) = e.amp.adjoint() * block * e.amp;
            const complex w1 = std::conj(c1.amp(m)) * c1.amp(n);
            const complex w2 = std::conj(c2.amp(m)) * c2.amp(n);
            b1 += w1 * block;
            b2 += w2 * block;
        }

    const auto branch_term = [&](const StateVector& c) {
        Vector psi = tensor_state(StateVector{c.amp}, StateVector{e.amp}).amp;
        Vector u = v * psi;
        Eigen::Map<const Matrix> grid(psi.data(), ne, nc);
        Matrix shifted = grid * a.transpose();
        Eigen::Map<const Vector> w(shifted.data(), nc * ne);
        return (u - w).squaredNorm();
    };

    const double t1 = branch_term(c1);
    const double t2 = branch_term(c2);
    const Vector be1 = b1 * e.amp;
    const Vector be2 = b2 * e.amp;
    const double v1 = std::real(complex(e.amp.adjoint() * be1));
    const double v2 = std::real(complex(e.amp.adjoint() * be2));
    const double cross = 2.0 * std::real(complex(be1.adjoint() * be2));
    return (t1 + t2 + 2.0 * v1 * v2 - cross) / hbar;
}

// Gaussian time scale of the echo overlap: exp(-(t/tau)^2) with
// tau = sqrt(hbar / C) / delta.  Nonpositive strength means no decay.
inline double decoherence_time(double strength, double delta, double hbar) {
    if (hbar <= 0.0) throw std::invalid_argument("decoherence_time: hbar must be positive");
    if (strength <= 0.0 || delta == 0.0) return std::numeric_limits<double>::infinity();
    return std::sqrt(hbar / strength) / std::abs(delta);
}

inline double echo_overlap_gaussian(double t, double tau) {
    if (!std::isfinite(tau)) return 1.0;
    const double r = t / tau;
    return std::exp(-r * r);
}

// Dimensionless rate factor of the algebraic single-branch relaxation,
// u = 64 j_c j_e; the branch purity follows 1/sqrt(1 + u (delta t)^2).
inline double relaxation_rate_factor(double j_c, double j_e) { return 64.0 * j_c * j_e; }

inline double relaxation_time(double j_c, double j_e, double delta) {
    const double u = relaxation_rate_factor(j_c, j_e);
    if (u <= 0.0 || delta == 0.0) return std::numeric_limits<double>::infinity();
    return 1.0 / (std::abs(delta) * std::sqrt(u));
}

// General multi-mode branch relaxation 1 / sqrt(det(1 + (delta t)^2 M)) with
// M = H lambda_c^{-1} H^T lambda_e^{-1} built from the coupling cross second
// derivatives H; the scalar wrapper is the d = 1 case with M = u.
inline double branch_purity_general(double t, double delta, const Eigen::MatrixXd& m) {
    if (m.rows() != m.cols()) throw std::invalid_argument("branch_purity_general: M must be square");
    const double s = delta * t;
    Eigen::MatrixXd g = Eigen::MatrixXd::Identity(m.rows(), m.rows()) + s * s * m;
    const double det = g.determinant();
    if (det <= 0.0) throw std::invalid_argument("branch_purity_general: M must keep 1 + s^2 M positive");
    return 1.0 / std::sqrt(det);
}

inline double branch_purity(double t, double tau_p) {
    if (!std::isfinite(tau_p)) return 1.0;
    const double r = t / tau_p;
    return 1.0 / std::sqrt(1.0 + r * r);
}

// Purity of the full superposition: both branch purities plus twice the
// branch overlap, all referred to the t = 0 value of one.
inline double cat_purity(double t, double tau_p1, double tau_p2, double tau_dec) {
    return 0.25 * (branch_purity(t, tau_p1) + branch_purity(t, tau_p2) +
                   2.0 * echo_overlap_gaussian(t, tau_dec));
}

} // namespace qcat
