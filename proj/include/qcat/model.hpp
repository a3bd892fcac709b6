#pragma once

#include <functional>
#include <vector>

#include <qcat/fock.hpp>
#include <qcat/propagator.hpp>

namespace qcat {

// Two anharmonic modes with quadratic-in-action level spacing,
//   H0 = gamma_c (hbar n_c - Delta)^2 + gamma_e (hbar n_e - Delta)^2,
// coupled through the squared quadratures,
//   H = H0 + delta * hbar^2 (a_c^dag + a_c)^2 (a_e^dag + a_e)^2.
// coupling_strength is delta; it is applied once, when H is assembled.
struct ModelParams {
    double gamma_c = 1.0;
    double gamma_e = 0.6456;
    double delta_shift = 1.2;
    double coupling_strength = 0.01;
    double hbar = 0.01;

    void validate() const {
        if (!(gamma_c > 0.0) || !(gamma_e > 0.0))
            throw std::invalid_argument("ModelParams: gamma_c and gamma_e must be > 0");
        if (!(hbar > 0.0)) throw std::invalid_argument("ModelParams: hbar must be > 0");
        if (!(coupling_strength >= 0.0))
            throw std::invalid_argument("ModelParams: coupling_strength must be >= 0");
        if (!(delta_shift >= 0.0))
            throw std::invalid_argument("ModelParams: delta_shift must be >= 0");
    }
};

// Minimum-uncertainty packet in action-angle variables: mean action j_star,
// mean angle theta_star, action variance hbar/(2*lambda).  A coherent state
// has lambda = 1/(2 j_star).
struct PacketSpec {
    double j_star = 0.0;
    double theta_star = 0.0;
    double lambda = 1.0;

    static PacketSpec coherent(double j) {
        if (!(j > 0.0)) throw std::invalid_argument("PacketSpec::coherent: j_star must be > 0");
        return PacketSpec{j, 0.0, 1.0 / (2.0 * j)};
    }

    void validate() const {
        if (!(j_star > 0.0)) throw std::invalid_argument("PacketSpec: j_star must be > 0");
        if (!(lambda > 0.0)) throw std::invalid_argument("PacketSpec: lambda must be > 0");
    }
};

// Two central packets forming the superposition, one environment packet.
struct CatSpec {
    PacketSpec c1 = PacketSpec::coherent(0.2);
    PacketSpec c2 = PacketSpec::coherent(0.01);
    PacketSpec e = PacketSpec::coherent(0.1);

    void validate() const {
        c1.validate();
        c2.validate();
        e.validate();
    }
};

inline complex packet_alpha(const PacketSpec& p, double hbar) {
    return std::polar(std::sqrt(p.j_star / hbar), p.theta_star);
}

inline StateVector packet_state(const ModeBasis& b, const PacketSpec& p, double tail_tol = 1e-10) {
    return coherent_state(b, packet_alpha(p, b.hbar), tail_tol);
}

// Normalized (|c1> + |c2>)/sqrt(2 + 2 Re<c1|c2>) on the central mode.
inline StateVector cat_state(const ModeBasis& b, const PacketSpec& c1, const PacketSpec& c2,
                             double tail_tol = 1e-10) {
    StateVector s1 = packet_state(b, c1, tail_tol);
    StateVector s2 = packet_state(b, c2, tail_tol);
    const double ov = std::real(complex(s1.amp.adjoint() * s2.amp));
    Vector cat = (s1.amp + s2.amp) / std::sqrt(2.0 + 2.0 * ov);
    return StateVector{std::move(cat)};
}

inline Operator mode_h0(const ModeBasis& b, double gamma, double delta_shift) {
    Matrix m = Matrix::Zero(b.levels, b.levels);
    for (int n = 0; n < b.levels; ++n) {
        const double x = b.hbar * n - delta_shift;
        m(n, n) = gamma * x * x;
    }
    return Operator{std::move(m), true};
}

inline void check_same_hbar(const ModeBasis& bc, const ModeBasis& be, double hbar) {
    if (bc.hbar != hbar || be.hbar != hbar)
        throw std::invalid_argument("model: mode bases must share the model hbar");
}

inline Operator build_h0(const ModelParams& p, const ModeBasis& bc, const ModeBasis& be) {
    p.validate();
    check_same_hbar(bc, be, p.hbar);
    Operator hc = mode_h0(bc, p.gamma_c, p.delta_shift);
    Operator he = mode_h0(be, p.gamma_e, p.delta_shift);
    Operator out = tensor_op(hc, identity_op(be.levels));
    out.mat += tensor_op(identity_op(bc.levels), he).mat;
    return out;
}

// Bare coupling hbar^2 (a_c^dag + a_c)^2 (x) (a_e^dag + a_e)^2, without the
// strength delta.
inline Operator build_coupling(const ModeBasis& bc, const ModeBasis& be) {
    if (bc.hbar != be.hbar)
        throw std::invalid_argument("build_coupling: mode bases must share hbar");
    Matrix xc2 = quadrature_op(bc).mat * quadrature_op(bc).mat;
    Matrix xe2 = quadrature_op(be).mat * quadrature_op(be).mat;
    Operator out = tensor_op(Operator{std::move(xc2), true}, Operator{std::move(xe2), true});
    out.mat *= bc.hbar * bc.hbar;
    return out;
}

inline Operator build_hamiltonian(const ModelParams& p, const ModeBasis& bc, const ModeBasis& be) {
    Operator h = build_h0(p, bc, be);
    if (p.coupling_strength != 0.0)
        h.mat += p.coupling_strength * build_coupling(bc, be).mat;
    return h;
}

// Sparse assembly of the same H for the Krylov path: H0 is diagonal and the
// coupling only connects n -> n, n+-2 on each mode.
inline Eigen::SparseMatrix<complex> build_hamiltonian_sparse(const ModelParams& p,
                                                             const ModeBasis& bc,
                                                             const ModeBasis& be) {
    p.validate();
    check_same_hbar(bc, be, p.hbar);
    const int nc = bc.levels, ne = be.levels;
    Matrix xc2 = quadrature_op(bc).mat * quadrature_op(bc).mat;
    Matrix xe2 = quadrature_op(be).mat * quadrature_op(be).mat;
    Operator h0c = mode_h0(bc, p.gamma_c, p.delta_shift);
    Operator h0e = mode_h0(be, p.gamma_e, p.delta_shift);
    const double scale = p.coupling_strength * p.hbar * p.hbar;

    std::vector<Eigen::Triplet<complex>> trip;
    trip.reserve(static_cast<size_t>(nc) * ne * 10);
    auto band = [](int n, int k) {
        std::vector<int> out;
        for (int d : {-2, 0, 2})
            if (k + d >= 0 && k + d < n) out.push_back(k + d);
        return out;
    };
    for (int ic = 0; ic < nc; ++ic)
        for (int ie = 0; ie < ne; ++ie) {
            const int row = ic * ne + ie;
            const complex diag0 = h0c.mat(ic, ic) + h0e.mat(ie, ie);
            trip.emplace_back(row, row, diag0);
            if (scale != 0.0)
                for (int jc : band(nc, ic))
                    for (int je : band(ne, ie)) {
                        const complex v = scale * xc2(ic, jc) * xe2(ie, je);
                        if (v != complex(0.0, 0.0)) trip.emplace_back(row, jc * ne + je, v);
                    }
        }
    Eigen::SparseMatrix<complex> h(nc * ne, nc * ne);
    h.setFromTriplets(trip.begin(), trip.end());
    return h;
}

// Classical averaged coupling vbar(j_c, j_e) = 4 j_c j_e and the derivatives
// the theory formulas need.
struct ClassicalCoupling {
    double value;
    double d_jc;
    double d_je;
    double d2_jc_je;
};

inline ClassicalCoupling classical_vbar(double j_c, double j_e) {
    return ClassicalCoupling{4.0 * j_c * j_e, 4.0 * j_e, 4.0 * j_c, 4.0};
}

// Group eigenvalues into degeneracy clusters: walking the sorted values, a
// gap larger than tol starts a new cluster.  Returns the cluster id of each
// original index.
inline std::vector<int> degeneracy_clusters(const Eigen::VectorXd& energies, double tol) {
    const int n = static_cast<int>(energies.size());
    std::vector<int> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(),
                     [&](int a, int b) { return energies(a) < energies(b); });
    std::vector<int> cluster(n, 0);
    int cid = 0;
    for (int k = 1; k < n; ++k) {
        if (energies(idx[k]) - energies(idx[k - 1]) > tol) ++cid;
        cluster[idx[k]] = cid;
    }
    cluster[idx[0]] = 0;
    return cluster;
}

// Projection of V onto the commutant of H0: in the H0 eigenbasis, matrix
// elements between eigenvalues further apart than degeneracy_tol are zeroed
// and full degenerate blocks are kept.  degeneracy_tol < 0 selects the
// default 1e-9 x spectral range.  This is the infinite-time average of the
// interaction-picture coupling.
inline Operator time_average_coupling(const Operator& v, const Operator& h0,
                                      double degeneracy_tol = -1.0) {
    if (!v.hermitian || !h0.hermitian)
        throw std::invalid_argument("time_average_coupling: operators must be hermitian");
    if (v.dim() != h0.dim())
        throw std::invalid_argument("time_average_coupling: dimension mismatch");
    const int n = v.dim();

    bool diagonal = true;
    for (int j = 0; j < n && diagonal; ++j)
        for (int i = 0; i < n; ++i)
            if (i != j && h0.mat(i, j) != complex(0.0, 0.0)) { diagonal = false; break; }

    if (diagonal) {
        Eigen::VectorXd energies = h0.mat.diagonal().real();
        const double range = energies.maxCoeff() - energies.minCoeff();
        const double tol = degeneracy_tol < 0.0 ? 1e-9 * range : degeneracy_tol;
        std::vector<int> cluster = degeneracy_clusters(energies, tol);
        Matrix out = v.mat;
        for (int j = 0; j < n; ++j)
            for (int i = 0; i < n; ++i)
                if (cluster[i] != cluster[j]) out(i, j) = complex(0.0, 0.0);
        return Operator{std::move(out), true};
    }

    SpectralDecomposition s = decompose(h0);
    const double range = s.eigenvalues(n - 1) - s.eigenvalues(0);
    const double tol = degeneracy_tol < 0.0 ? 1e-9 * range : degeneracy_tol;
    std::vector<int> cluster = degeneracy_clusters(s.eigenvalues, tol);
    Matrix w = s.eigenvectors.adjoint() * v.mat * s.eigenvectors;
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i)
            if (cluster[i] != cluster[j]) w(i, j) = complex(0.0, 0.0);
    Matrix out = s.eigenvectors * w * s.eigenvectors.adjoint();
    out = 0.5 * (out + Matrix(out.adjoint()));
    return Operator{std::move(out), true};
}

} // namespace qcat
