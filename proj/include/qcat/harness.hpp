#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include <qcat/fock.hpp>
#include <qcat/model.hpp>
#include <qcat/observables.hpp>
#include <qcat/propagator.hpp>
#include <qcat/theory.hpp>

// Experiment driver: run configuration, time-series generation, Gaussian
// echo fits, Wigner snapshots and machine-readable reports.

namespace qcat {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct FitError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class RunMode { Full, Echo, Effective };
enum class InitialState { Cat, Branch1, Branch2 };
enum class TheoryRegime { Averaged, Instantaneous };

inline RunMode run_mode_from_string(const std::string& s) {
    if (s == "full") return RunMode::Full;
    if (s == "echo") return RunMode::Echo;
    if (s == "effective") return RunMode::Effective;
    throw ConfigError("mode must be one of \"full\", \"echo\", \"effective\", got \"" + s + "\"");
}

inline const char* to_string(RunMode m) {
    switch (m) {
        case RunMode::Full: return "full";
        case RunMode::Echo: return "echo";
        default: return "effective";
    }
}

inline InitialState initial_state_from_string(const std::string& s) {
    if (s == "cat") return InitialState::Cat;
    if (s == "branch1") return InitialState::Branch1;
    if (s == "branch2") return InitialState::Branch2;
    throw ConfigError("initial_state must be one of \"cat\", \"branch1\", \"branch2\", got \"" + s +
                      "\"");
}

inline const char* to_string(InitialState s) {
    switch (s) {
        case InitialState::Cat: return "cat";
        case InitialState::Branch1: return "branch1";
        default: return "branch2";
    }
}

inline TheoryRegime theory_regime_from_string(const std::string& s) {
    if (s == "averaged") return TheoryRegime::Averaged;
    if (s == "instantaneous") return TheoryRegime::Instantaneous;
    throw ConfigError("theory_regime must be \"averaged\" or \"instantaneous\", got \"" + s + "\"");
}

inline const char* to_string(TheoryRegime r) {
    return r == TheoryRegime::Averaged ? "averaged" : "instantaneous";
}

struct OutputSpec {
    bool series = true;
    bool fit = true;
    std::vector<double> wigner_times;
    int wigner_points = 201;
};

struct RunConfig {
    ModelParams model;
    double j_c1 = 0.2;
    double j_c2 = 0.01;
    double j_e = 0.1;
    double theta_c1 = 0.0;
    double theta_c2 = 0.0;
    double theta_e = 0.0;
    double t_max = 600.0;
    int n_steps = 400;
    int cutoff_central = 0;      // 0 selects the size from the packet amplitude
    int cutoff_environment = 0;  // ditto
    RunMode mode = RunMode::Echo;
    InitialState initial_state = InitialState::Cat;
    TheoryRegime theory_regime = TheoryRegime::Averaged;
    OutputSpec outputs;
    std::string out_dir = ".";
    long seed = 0;  // reserved for stochastic extensions, unused

    void validate() const {
        try {
            model.validate();
        } catch (const std::invalid_argument& e) {
            throw ConfigError(e.what());
        }
        auto positive = [](double v, const char* name) {
            if (!(v > 0.0) || !std::isfinite(v))
                throw ConfigError(std::string(name) + " must be positive and finite");
        };
        positive(j_c1, "cat.j_c1");
        positive(j_c2, "cat.j_c2");
        positive(j_e, "cat.j_e");
        for (double th : {theta_c1, theta_c2, theta_e})
            if (!std::isfinite(th)) throw ConfigError("packet angles must be finite");
        positive(t_max, "grid.t_max");
        if (n_steps < 2) throw ConfigError("grid.n_steps must be at least 2");
        for (int cut : {cutoff_central, cutoff_environment})
            if (cut != 0 && cut < 2)
                throw ConfigError("cutoffs must be 0 (automatic) or at least 2");
        if (outputs.wigner_points < 2) throw ConfigError("outputs.wigner_points must be at least 2");
        for (double t : outputs.wigner_times)
            if (!std::isfinite(t) || t < 0.0 || t > t_max)
                throw ConfigError("outputs.wigner_times entries must lie within [0, t_max]");
        if (out_dir.empty()) throw ConfigError("out_dir must be nonempty");
    }
};

namespace detail {

inline void require_keys(const nlohmann::json& j, const char* where,
                         std::initializer_list<const char*> allowed) {
    if (!j.is_object()) throw ConfigError(std::string(where) + ": expected a JSON object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool known = false;
        for (const char* k : allowed)
            if (it.key() == k) {
                known = true;
                break;
            }
        if (!known)
            throw ConfigError(std::string("unknown key \"") + it.key() + "\" in " + where);
    }
}

inline void read_value(const nlohmann::json& o, const char* key, const char* where, double& out) {
    if (!o.contains(key)) return;
    const auto& v = o.at(key);
    if (!v.is_number())
        throw ConfigError(std::string(where) + "." + key + ": expected a number");
    out = v.get<double>();
}

inline void read_value(const nlohmann::json& o, const char* key, const char* where, int& out) {
    if (!o.contains(key)) return;
    const auto& v = o.at(key);
    if (!v.is_number_integer())
        throw ConfigError(std::string(where) + "." + key + ": expected an integer");
    out = v.get<int>();
}

inline void read_value(const nlohmann::json& o, const char* key, const char* where, long& out) {
    if (!o.contains(key)) return;
    const auto& v = o.at(key);
    if (!v.is_number_integer())
        throw ConfigError(std::string(where) + "." + key + ": expected an integer");
    out = v.get<long>();
}

inline void read_value(const nlohmann::json& o, const char* key, const char* where, bool& out) {
    if (!o.contains(key)) return;
    const auto& v = o.at(key);
    if (!v.is_boolean())
        throw ConfigError(std::string(where) + "." + key + ": expected a boolean");
    out = v.get<bool>();
}

inline void read_value(const nlohmann::json& o, const char* key, const char* where,
                       std::string& out) {
    if (!o.contains(key)) return;
    const auto& v = o.at(key);
    if (!v.is_string())
        throw ConfigError(std::string(where) + "." + key + ": expected a string");
    out = v.get<std::string>();
}

inline void read_value(const nlohmann::json& o, const char* key, const char* where,
                       std::vector<double>& out) {
    if (!o.contains(key)) return;
    const auto& v = o.at(key);
    if (!v.is_array())
        throw ConfigError(std::string(where) + "." + key + ": expected an array of numbers");
    out.clear();
    for (const auto& e : v) {
        if (!e.is_number())
            throw ConfigError(std::string(where) + "." + key + ": expected an array of numbers");
        out.push_back(e.get<double>());
    }
}

} // namespace detail

// Every key is optional; absent keys keep the defaults above.  Unknown keys
// are rejected at every nesting level so typos cannot silently fall back.
inline RunConfig parse_config(const nlohmann::json& j) {
    RunConfig c;
    detail::require_keys(j, "config",
                         {"model", "cat", "grid", "cutoffs", "mode", "initial_state",
                          "theory_regime", "outputs", "out_dir", "seed"});
    if (j.contains("model")) {
        const auto& m = j.at("model");
        detail::require_keys(m, "model",
                             {"gamma_c", "gamma_e", "delta_shift", "coupling_strength", "hbar"});
        detail::read_value(m, "gamma_c", "model", c.model.gamma_c);
        detail::read_value(m, "gamma_e", "model", c.model.gamma_e);
        detail::read_value(m, "delta_shift", "model", c.model.delta_shift);
        detail::read_value(m, "coupling_strength", "model", c.model.coupling_strength);
        detail::read_value(m, "hbar", "model", c.model.hbar);
    }
    if (j.contains("cat")) {
        const auto& g = j.at("cat");
        detail::require_keys(g, "cat", {"j_c1", "j_c2", "j_e", "theta_c1", "theta_c2", "theta_e"});
        detail::read_value(g, "j_c1", "cat", c.j_c1);
        detail::read_value(g, "j_c2", "cat", c.j_c2);
        detail::read_value(g, "j_e", "cat", c.j_e);
        detail::read_value(g, "theta_c1", "cat", c.theta_c1);
        detail::read_value(g, "theta_c2", "cat", c.theta_c2);
        detail::read_value(g, "theta_e", "cat", c.theta_e);
    }
    if (j.contains("grid")) {
        const auto& g = j.at("grid");
        detail::require_keys(g, "grid", {"t_max", "n_steps"});
        detail::read_value(g, "t_max", "grid", c.t_max);
        detail::read_value(g, "n_steps", "grid", c.n_steps);
    }
    if (j.contains("cutoffs")) {
        const auto& g = j.at("cutoffs");
        detail::require_keys(g, "cutoffs", {"central", "environment"});
        detail::read_value(g, "central", "cutoffs", c.cutoff_central);
        detail::read_value(g, "environment", "cutoffs", c.cutoff_environment);
    }
    if (j.contains("mode")) {
        std::string s = to_string(c.mode);
        detail::read_value(j, "mode", "config", s);
        c.mode = run_mode_from_string(s);
    }
    if (j.contains("initial_state")) {
        std::string s = to_string(c.initial_state);
        detail::read_value(j, "initial_state", "config", s);
        c.initial_state = initial_state_from_string(s);
    }
    if (j.contains("theory_regime")) {
        std::string s = to_string(c.theory_regime);
        detail::read_value(j, "theory_regime", "config", s);
        c.theory_regime = theory_regime_from_string(s);
    }
    if (j.contains("outputs")) {
        const auto& g = j.at("outputs");
        detail::require_keys(g, "outputs", {"series", "fit", "wigner_times", "wigner_points"});
        detail::read_value(g, "series", "outputs", c.outputs.series);
        detail::read_value(g, "fit", "outputs", c.outputs.fit);
        detail::read_value(g, "wigner_times", "outputs", c.outputs.wigner_times);
        detail::read_value(g, "wigner_points", "outputs", c.outputs.wigner_points);
    }
    detail::read_value(j, "out_dir", "config", c.out_dir);
    detail::read_value(j, "seed", "config", c.seed);
    c.validate();
    return c;
}

inline RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config file " + path + " is not valid JSON: " + e.what());
    }
    return parse_config(j);
}

// Inverse of parse_config: the returned document parses back to an identical
// configuration, so reports can embed the exact inputs of a run.
inline nlohmann::json config_to_json(const RunConfig& c) {
    return nlohmann::json{
        {"model",
         {{"gamma_c", c.model.gamma_c},
          {"gamma_e", c.model.gamma_e},
          {"delta_shift", c.model.delta_shift},
          {"coupling_strength", c.model.coupling_strength},
          {"hbar", c.model.hbar}}},
        {"cat",
         {{"j_c1", c.j_c1},
          {"j_c2", c.j_c2},
          {"j_e", c.j_e},
          {"theta_c1", c.theta_c1},
          {"theta_c2", c.theta_c2},
          {"theta_e", c.theta_e}}},
        {"grid", {{"t_max", c.t_max}, {"n_steps", c.n_steps}}},
        {"cutoffs", {{"central", c.cutoff_central}, {"environment", c.cutoff_environment}}},
        {"mode", to_string(c.mode)},
        {"initial_state", to_string(c.initial_state)},
        {"theory_regime", to_string(c.theory_regime)},
        {"outputs",
         {{"series", c.outputs.series},
          {"fit", c.outputs.fit},
          {"wigner_times", c.outputs.wigner_times},
          {"wigner_points", c.outputs.wigner_points}}},
        {"out_dir", c.out_dir},
        {"seed", c.seed}};
}

// Basis size that keeps the truncated tail of a coherent packet of action j
// far below the monitored thresholds: mean occupation plus eight standard
// deviation widths plus a fixed floor.
inline int auto_cutoff(double j_star, double hbar) {
    const double nbar = j_star / hbar;
    return static_cast<int>(std::ceil(nbar + 8.0 * std::sqrt(nbar) + 10.0));
}

inline int resolve_cutoff_central(const RunConfig& c) {
    return c.cutoff_central > 0 ? c.cutoff_central
                                : auto_cutoff(std::max(c.j_c1, c.j_c2), c.model.hbar);
}

inline int resolve_cutoff_environment(const RunConfig& c) {
    return c.cutoff_environment > 0 ? c.cutoff_environment : auto_cutoff(c.j_e, c.model.hbar);
}

inline constexpr const char* kSeriesHeader =
    "times,I_numeric,I_theory,F_e_numeric,F_e_theory,I1_numeric,I2_numeric,I1_theory,I2_theory,"
    "leakage";

struct TimeSeries {
    std::vector<double> times;
    std::vector<double> I_numeric;
    std::vector<double> I_theory;
    std::vector<double> F_e_numeric;
    std::vector<double> F_e_theory;
    std::vector<double> I1_numeric;
    std::vector<double> I2_numeric;
    std::vector<double> I1_theory;
    std::vector<double> I2_theory;
    std::vector<double> leakage;

    size_t size() const { return times.size(); }
};

inline void write_csv(const TimeSeries& s, const std::string& path) {
    std::FILE* f = std::fopen(path.c_str(), "w");
    if (!f) throw std::runtime_error("write_csv: cannot open " + path);
    std::fprintf(f, "%s\n", kSeriesHeader);
    for (size_t i = 0; i < s.size(); ++i)
        std::fprintf(f, "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                     s.times[i], s.I_numeric[i], s.I_theory[i], s.F_e_numeric[i], s.F_e_theory[i],
                     s.I1_numeric[i], s.I2_numeric[i], s.I1_theory[i], s.I2_theory[i],
                     s.leakage[i]);
    const bool bad = std::ferror(f) != 0;
    std::fclose(f);
    if (bad) throw std::runtime_error("write_csv: write failed for " + path);
}

inline TimeSeries read_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("read_csv: cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("read_csv: empty file " + path);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != kSeriesHeader)
        throw std::runtime_error("read_csv: unexpected header in " + path + ": " + line);
    TimeSeries s;
    std::vector<std::vector<double>*> cols = {&s.times,      &s.I_numeric,  &s.I_theory,
                                              &s.F_e_numeric, &s.F_e_theory, &s.I1_numeric,
                                              &s.I2_numeric,  &s.I1_theory,  &s.I2_theory,
                                              &s.leakage};
    size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string cell;
        size_t k = 0;
        while (std::getline(ss, cell, ',')) {
            if (k >= cols.size())
                throw std::runtime_error("read_csv: too many columns at row " +
                                         std::to_string(row));
            try {
                cols[k]->push_back(std::stod(cell));
            } catch (const std::exception&) {
                throw std::runtime_error("read_csv: bad number \"" + cell + "\" at row " +
                                         std::to_string(row));
            }
            ++k;
        }
        if (k != cols.size())
            throw std::runtime_error("read_csv: expected 10 columns at row " + std::to_string(row) +
                                     ", got " + std::to_string(k));
    }
    return s;
}

struct GaussianFit {
    double tau = 0.0;
    double residual_rms = 0.0;  // rms of -ln F_e - (t/tau)^2 over the fit window
    int points = 0;
};

// Least squares for -ln F_e = k t^2 through the origin, restricted to the
// window where the decay is resolved but not yet saturated.
inline GaussianFit gaussian_fit(const std::vector<double>& times, const std::vector<double>& f_e,
                                double f_lo = 0.2, double f_hi = 0.9, int min_points = 5) {
    if (times.size() != f_e.size())
        throw std::invalid_argument("gaussian_fit: length mismatch");
    double s4 = 0.0, s2y = 0.0;
    int used = 0;
    for (size_t i = 0; i < times.size(); ++i) {
        if (!(f_e[i] >= f_lo && f_e[i] <= f_hi) || !(times[i] > 0.0)) continue;
        const double t2 = times[i] * times[i];
        s4 += t2 * t2;
        s2y += t2 * (-std::log(f_e[i]));
        ++used;
    }
    if (used < min_points)
        throw FitError("gaussian fit needs at least " + std::to_string(min_points) +
                       " samples with overlap inside [" + std::to_string(f_lo) + ", " +
                       std::to_string(f_hi) + "], got " + std::to_string(used));
    const double k = s2y / s4;
    if (!(k > 0.0)) throw FitError("gaussian fit: nonpositive decay curvature");
    GaussianFit fit;
    fit.tau = 1.0 / std::sqrt(k);
    fit.points = used;
    double ss = 0.0;
    for (size_t i = 0; i < times.size(); ++i) {
        if (!(f_e[i] >= f_lo && f_e[i] <= f_hi) || !(times[i] > 0.0)) continue;
        const double res = -std::log(f_e[i]) - k * times[i] * times[i];
        ss += res * res;
    }
    fit.residual_rms = std::sqrt(ss / used);
    return fit;
}

inline double fit_gaussian_tau(const std::vector<double>& times, const std::vector<double>& f_e,
                               double f_lo = 0.2, double f_hi = 0.9, int min_points = 5) {
    return gaussian_fit(times, f_e, f_lo, f_hi, min_points).tau;
}

struct RunResult {
    TimeSeries series;
    int cutoff_central = 0;
    int cutoff_environment = 0;
    double strength = 0.0;          // semiclassical dephasing strength, regime adjusted
    double strength_operator = std::numeric_limits<double>::quiet_NaN();
    double tau_dec = 0.0;           // Gaussian time used in the theory columns
    double tau_dec_operator = std::numeric_limits<double>::quiet_NaN();
    double tau_p1 = 0.0;
    double tau_p2 = 0.0;
    double leakage_max = 0.0;
};

namespace detail {

// Dense spectral propagation above this dimension would not fit the time or
// memory budget of a single workstation core; the sparse Lanczos stepper
// takes over there.
inline constexpr int kDenseLimit = 6000;

inline Eigen::VectorXd h0_energies(const ModelParams& p, const ModeBasis& bc, const ModeBasis& be) {
    Eigen::VectorXd ec(bc.levels), ee(be.levels);
    for (int n = 0; n < bc.levels; ++n) {
        const double d = p.hbar * n - p.delta_shift;
        ec(n) = p.gamma_c * d * d;
    }
    for (int n = 0; n < be.levels; ++n) {
        const double d = p.hbar * n - p.delta_shift;
        ee(n) = p.gamma_e * d * d;
    }
    Eigen::VectorXd out(bc.levels * be.levels);
    for (int ic = 0; ic < bc.levels; ++ic)
        for (int ie = 0; ie < be.levels; ++ie) out(ic * be.levels + ie) = ec(ic) + ee(ie);
    return out;
}

inline Vector apply_phases(const Vector& amp, const Eigen::VectorXd& energies, double angle_scale) {
    Vector out(amp.size());
    for (Eigen::Index i = 0; i < amp.size(); ++i)
        out(i) = amp(i) * std::polar(1.0, energies(i) * angle_scale);
    return out;
}

// Uniform interface over the three propagation backends.  Calls must use
// nondecreasing times; the Lanczos backend steps cumulatively.
class StateEvolver {
  public:
    virtual ~StateEvolver() = default;
    virtual StateVector at(double t) = 0;
};

class DenseEvolver : public StateEvolver {
  public:
    DenseEvolver(std::shared_ptr<const SpectralDecomposition> s, StateVector psi0, double hbar,
                 double time_scale, Eigen::VectorXd echo_energies)
        : s_(std::move(s)),
          psi0_(std::move(psi0)),
          hbar_(hbar),
          time_scale_(time_scale),
          echo_energies_(std::move(echo_energies)) {}

    StateVector at(double t) override {
        StateVector out = evolve(*s_, psi0_, time_scale_ * t, hbar_);
        if (echo_energies_.size() > 0)
            out.amp = apply_phases(out.amp, echo_energies_, t / hbar_);
        return out;
    }

  private:
    std::shared_ptr<const SpectralDecomposition> s_;
    StateVector psi0_;
    double hbar_;
    double time_scale_;
    Eigen::VectorXd echo_energies_;  // empty means no echo phase
};

class DiagonalEvolver : public StateEvolver {
  public:
    DiagonalEvolver(Eigen::VectorXd energies, StateVector psi0, double hbar)
        : energies_(std::move(energies)), psi0_(std::move(psi0)), hbar_(hbar) {}

    StateVector at(double t) override {
        return StateVector{apply_phases(psi0_.amp, energies_, -t / hbar_)};
    }

  private:
    Eigen::VectorXd energies_;
    StateVector psi0_;
    double hbar_;
};

class LanczosEvolver : public StateEvolver {
  public:
    LanczosEvolver(const Eigen::SparseMatrix<complex>& h, StateVector psi0, double hbar,
                   Eigen::VectorXd echo_energies)
        : prop_(h, hbar),
          psi_(std::move(psi0)),
          hbar_(hbar),
          echo_energies_(std::move(echo_energies)) {}

    StateVector at(double t) override {
        if (t < t_cur_ - 1e-12)
            throw std::logic_error("LanczosEvolver: sample times must be nondecreasing");
        if (t > t_cur_) {
            prop_.step(psi_.amp, t - t_cur_);
            t_cur_ = t;
        }
        if (echo_energies_.size() > 0)
            return StateVector{apply_phases(psi_.amp, echo_energies_, t / hbar_)};
        return psi_;
    }

  private:
    KrylovPropagator prop_;
    StateVector psi_;
    double t_cur_ = 0.0;
    double hbar_;
    Eigen::VectorXd echo_energies_;
};

struct EvolutionContext {
    ModeBasis bc;
    ModeBasis be;
    StateVector psi_b1;
    StateVector psi_b2;
    StateVector psi_sel;
    std::unique_ptr<StateEvolver> ev_b1;
    std::unique_ptr<StateEvolver> ev_b2;
    std::unique_ptr<StateEvolver> ev_sel;  // null when the selected state is a branch
    int sel_branch = 0;                    // 0 cat, 1 branch1, 2 branch2
    double strength_operator = std::numeric_limits<double>::quiet_NaN();
};

// Shared setup for the series and snapshot drivers.  need_branches controls
// whether both branch evolutions are prepared (the echo overlap and branch
// purity columns need them); the selected state always gets an evolver,
// aliased to a branch where possible to avoid a third propagation.
inline EvolutionContext make_context(const RunConfig& cfg, bool need_branches) {
    cfg.validate();
    const ModelParams& p = cfg.model;
    const int nc = resolve_cutoff_central(cfg);
    const int ne = resolve_cutoff_environment(cfg);

    EvolutionContext ctx{ModeBasis(nc, p.hbar, "central"), ModeBasis(ne, p.hbar, "environment")};

    PacketSpec p1 = PacketSpec::coherent(cfg.j_c1);
    p1.theta_star = cfg.theta_c1;
    PacketSpec p2 = PacketSpec::coherent(cfg.j_c2);
    p2.theta_star = cfg.theta_c2;
    PacketSpec pe = PacketSpec::coherent(cfg.j_e);
    pe.theta_star = cfg.theta_e;

    StateVector c1 = packet_state(ctx.bc, p1);
    StateVector c2 = packet_state(ctx.bc, p2);
    StateVector es = packet_state(ctx.be, pe);
    ctx.psi_b1 = tensor_state(c1, es);
    ctx.psi_b2 = tensor_state(c2, es);
    switch (cfg.initial_state) {
        case InitialState::Cat:
            ctx.psi_sel = tensor_state(cat_state(ctx.bc, p1, p2), es);
            ctx.sel_branch = 0;
            break;
        case InitialState::Branch1:
            ctx.psi_sel = ctx.psi_b1;
            ctx.sel_branch = 1;
            break;
        case InitialState::Branch2:
            ctx.psi_sel = ctx.psi_b2;
            ctx.sel_branch = 2;
            break;
    }

    const int dim = nc * ne;
    const Eigen::VectorXd e0 = h0_energies(p, ctx.bc, ctx.be);
    const Eigen::VectorXd no_echo;
    const bool echo = cfg.mode == RunMode::Echo;
    const double delta = cfg.model.coupling_strength;

    auto make_dense = [&](std::shared_ptr<const SpectralDecomposition> s, const StateVector& psi,
                          double scale, bool with_echo) {
        return std::make_unique<DenseEvolver>(std::move(s), psi, p.hbar, scale,
                                              with_echo ? e0 : no_echo);
    };

    if (cfg.mode == RunMode::Effective) {
        if (dim <= kDenseLimit) {
            Operator v = build_coupling(ctx.bc, ctx.be);
            Operator h0{Matrix(e0.cast<complex>().asDiagonal()), true};
            Operator vbar = time_average_coupling(v, h0);
            ctx.strength_operator = dephasing_strength(
                cfg.theory_regime == TheoryRegime::Averaged ? vbar : v, c1, c2, es, p.hbar);
            auto s_eff = std::make_shared<SpectralDecomposition>(decompose(vbar));
            if (need_branches) {
                ctx.ev_b1 = make_dense(s_eff, ctx.psi_b1, delta, false);
                ctx.ev_b2 = make_dense(s_eff, ctx.psi_b2, delta, false);
            }
            if (ctx.sel_branch == 0 || !need_branches)
                ctx.ev_sel = make_dense(s_eff, ctx.psi_sel, delta, false);
        } else {
            // Above the dense limit the time average is taken entrywise on
            // the diagonal, which is exact only for a nondegenerate spectrum;
            // refuse otherwise rather than silently dropping blocks.
            const double range = e0.maxCoeff() - e0.minCoeff();
            std::vector<int> cluster = degeneracy_clusters(e0, 1e-9 * range);
            const int max_id = *std::max_element(cluster.begin(), cluster.end());
            if (max_id != dim - 1)
                throw std::runtime_error(
                    "effective propagation above the dense-spectral limit needs a nondegenerate "
                    "anharmonic spectrum");
            Eigen::VectorXd xc2(nc), xe2(ne);
            {
                Eigen::VectorXd dc =
                    (quadrature_op(ctx.bc).mat * quadrature_op(ctx.bc).mat).diagonal().real();
                Eigen::VectorXd de =
                    (quadrature_op(ctx.be).mat * quadrature_op(ctx.be).mat).diagonal().real();
                xc2 = dc;
                xe2 = de;
            }
            Eigen::VectorXd vdiag(dim);
            for (int ic = 0; ic < nc; ++ic)
                for (int ie = 0; ie < ne; ++ie)
                    vdiag(ic * ne + ie) = p.hbar * p.hbar * xc2(ic) * xe2(ie);
            Eigen::VectorXd scaled = delta * vdiag;
            if (need_branches) {
                ctx.ev_b1 = std::make_unique<DiagonalEvolver>(scaled, ctx.psi_b1, p.hbar);
                ctx.ev_b2 = std::make_unique<DiagonalEvolver>(scaled, ctx.psi_b2, p.hbar);
            }
            if (ctx.sel_branch == 0 || !need_branches)
                ctx.ev_sel = std::make_unique<DiagonalEvolver>(scaled, ctx.psi_sel, p.hbar);
        }
        return ctx;
    }

    if (dim <= kDenseLimit) {
        Operator v = build_coupling(ctx.bc, ctx.be);
        {
            Operator h0{Matrix(e0.cast<complex>().asDiagonal()), true};
            Operator vbar = time_average_coupling(v, h0);
            ctx.strength_operator = dephasing_strength(
                cfg.theory_regime == TheoryRegime::Averaged ? vbar : v, c1, c2, es, p.hbar);
        }
        Operator h{Matrix(e0.cast<complex>().asDiagonal()), true};
        if (delta != 0.0) h.mat += delta * v.mat;
        v.mat.resize(0, 0);
        auto s_h = std::make_shared<SpectralDecomposition>(decompose(h));
        h.mat.resize(0, 0);
        if (need_branches) {
            ctx.ev_b1 = make_dense(s_h, ctx.psi_b1, 1.0, echo);
            ctx.ev_b2 = make_dense(s_h, ctx.psi_b2, 1.0, echo);
        }
        if (ctx.sel_branch == 0 || !need_branches)
            ctx.ev_sel = make_dense(s_h, ctx.psi_sel, 1.0, echo);
    } else {
        Eigen::SparseMatrix<complex> hs = build_hamiltonian_sparse(p, ctx.bc, ctx.be);
        if (need_branches) {
            ctx.ev_b1 = std::make_unique<LanczosEvolver>(hs, ctx.psi_b1, p.hbar,
                                                         echo ? e0 : no_echo);
            ctx.ev_b2 = std::make_unique<LanczosEvolver>(hs, ctx.psi_b2, p.hbar,
                                                         echo ? e0 : no_echo);
        }
        if (ctx.sel_branch == 0 || !need_branches)
            ctx.ev_sel = std::make_unique<LanczosEvolver>(hs, ctx.psi_sel, p.hbar,
                                                          echo ? e0 : no_echo);
    }
    return ctx;
}

inline double state_leakage(const DensityMatrix& rho_c, const DensityMatrix& rho_e) {
    return std::max(top_population(rho_c), top_population(rho_e));
}

} // namespace detail

// Evolves the selected state plus both branch products, samples the purity
// and echo-overlap columns on a uniform grid and pairs them with the
// semiclassical laws.  Writes out_dir/series.csv when outputs.series is set.
inline RunResult run_decoherence_experiment(const RunConfig& cfg) {
    detail::EvolutionContext ctx = detail::make_context(cfg, true);
    const int nc = ctx.bc.levels, ne = ctx.be.levels;
    const double delta = cfg.model.coupling_strength;
    const double hbar = cfg.model.hbar;

    RunResult r;
    r.cutoff_central = nc;
    r.cutoff_environment = ne;
    const double regime_factor = cfg.theory_regime == TheoryRegime::Instantaneous ? 16.0 : 1.0;
    r.strength = regime_factor * dephasing_strength_classical(cfg.j_c1, cfg.j_c2, cfg.j_e);
    r.strength_operator = ctx.strength_operator;
    r.tau_dec = decoherence_time(r.strength, delta, hbar);
    if (std::isfinite(ctx.strength_operator))
        r.tau_dec_operator = decoherence_time(ctx.strength_operator, delta, hbar);
    r.tau_p1 = relaxation_time(cfg.j_c1, cfg.j_e, delta);
    r.tau_p2 = relaxation_time(cfg.j_c2, cfg.j_e, delta);

    TimeSeries& s = r.series;
    const int n = cfg.n_steps;
    for (int k = 0; k <= n; ++k) {
        const double t = cfg.t_max * static_cast<double>(k) / n;
        StateVector phi_b1 = ctx.ev_b1->at(t);
        StateVector phi_b2 = ctx.ev_b2->at(t);

        DensityMatrix rc1 = reduced_central(phi_b1, nc, ne);
        DensityMatrix re1 = reduced_environment(phi_b1, nc, ne);
        DensityMatrix rc2 = reduced_central(phi_b2, nc, ne);
        DensityMatrix re2 = reduced_environment(phi_b2, nc, ne);

        double i_num, leak;
        if (ctx.sel_branch == 0) {
            StateVector phi_sel = ctx.ev_sel->at(t);
            DensityMatrix rc_sel = reduced_central(phi_sel, nc, ne);
            DensityMatrix re_sel = reduced_environment(phi_sel, nc, ne);
            i_num = purity(rc_sel);
            leak = std::max({detail::state_leakage(rc_sel, re_sel),
                             detail::state_leakage(rc1, re1), detail::state_leakage(rc2, re2)});
        } else {
            i_num = ctx.sel_branch == 1 ? purity(rc1) : purity(rc2);
            leak = std::max(detail::state_leakage(rc1, re1), detail::state_leakage(rc2, re2));
        }

        s.times.push_back(t);
        s.I_numeric.push_back(i_num);
        s.F_e_numeric.push_back(cross_purity(re1, re2));
        s.I1_numeric.push_back(purity(rc1));
        s.I2_numeric.push_back(purity(rc2));
        s.leakage.push_back(leak);

        s.F_e_theory.push_back(echo_overlap_gaussian(t, r.tau_dec));
        s.I1_theory.push_back(branch_purity(t, r.tau_p1));
        s.I2_theory.push_back(branch_purity(t, r.tau_p2));
        switch (ctx.sel_branch) {
            case 0: s.I_theory.push_back(cat_purity(t, r.tau_p1, r.tau_p2, r.tau_dec)); break;
            case 1: s.I_theory.push_back(branch_purity(t, r.tau_p1)); break;
            default: s.I_theory.push_back(branch_purity(t, r.tau_p2)); break;
        }
    }
    r.leakage_max = *std::max_element(s.leakage.begin(), s.leakage.end());

    if (cfg.outputs.series) {
        std::filesystem::create_directories(cfg.out_dir);
        write_csv(s, (std::filesystem::path(cfg.out_dir) / "series.csv").string());
    }
    return r;
}

struct WignerSnapshot {
    double time = 0.0;
    WignerGrid grid;
    double min_w = 0.0;
    double min_x = 0.0;
    double min_y = 0.0;
    double integral = 0.0;
    double purity_quadrature = 0.0;
    double purity_exact = 0.0;
    double phase_central = 0.0;  // arg of the central-mode ladder expectation
    double mid_x = 0.0;          // phase space centroid, the fringe midpoint
    double mid_y = 0.0;
    double fringe_contrast = 0.0;  // peak to trough near the midpoint over 2 max|W|
};

// Central-mode Wigner snapshots of the selected state at the configured
// times.  The grid spans 1.6x the widest packet radius in the physical
// quadrature units of the central mode.
inline std::vector<WignerSnapshot> run_wigner_snapshots(const RunConfig& cfg) {
    if (cfg.outputs.wigner_times.empty())
        throw ConfigError("outputs.wigner_times is empty, nothing to snapshot");
    detail::EvolutionContext ctx = detail::make_context(cfg, false);
    const int nc = ctx.bc.levels, ne = ctx.be.levels;
    const double hbar = cfg.model.hbar;

    std::vector<double> times = cfg.outputs.wigner_times;
    std::sort(times.begin(), times.end());

    const double amax =
        std::max(std::sqrt(cfg.j_c1 / hbar), std::sqrt(cfg.j_c2 / hbar)) * std::sqrt(2.0 * hbar);
    const double span = 1.6 * amax;
    const int npts = cfg.outputs.wigner_points;
    Eigen::VectorXd axis = Eigen::VectorXd::LinSpaced(npts, -span, span);

    // Interference fringes sit around the phase space centroid.  The probe
    // disc covers about one fringe wavelength; the packet separation is
    // rotation invariant, so the initial value serves at all times.
    const std::complex<double> a1 = std::polar(std::sqrt(cfg.j_c1 / hbar), cfg.theta_c1);
    const std::complex<double> a2 = std::polar(std::sqrt(cfg.j_c2 / hbar), cfg.theta_c2);
    const double sep = std::abs(a1 - a2) * std::sqrt(2.0 * hbar);
    const double grid_step = (npts > 1) ? axis(1) - axis(0) : span;
    const double r_disc = std::max(0.25 * sep, 3.0 * grid_step);

    Matrix a_c = ladder_down(ctx.bc).mat;
    std::vector<WignerSnapshot> out;
    out.reserve(times.size());
    for (double t : times) {
        StateVector phi = ctx.ev_sel->at(t);
        DensityMatrix rc = reduced_central(phi, nc, ne);
        WignerSnapshot snap;
        snap.time = t;
        snap.grid = wigner(rc, hbar, axis, axis);
        Eigen::Index imin = 0, jmin = 0;
        snap.min_w = snap.grid.w.minCoeff(&imin, &jmin);
        snap.min_x = snap.grid.x(imin);
        snap.min_y = snap.grid.y(jmin);
        snap.integral = wigner_integral(snap.grid);
        snap.purity_quadrature = wigner_purity(snap.grid);
        snap.purity_exact = purity(rc);
        const std::complex<double> ec = expectation(rc, a_c);
        snap.phase_central = std::arg(ec);
        snap.mid_x = std::sqrt(2.0 * hbar) * ec.real();
        snap.mid_y = std::sqrt(2.0 * hbar) * ec.imag();
        double w_lo = std::numeric_limits<double>::infinity();
        double w_hi = -w_lo;
        for (Eigen::Index i = 0; i < snap.grid.x.size(); ++i)
            for (Eigen::Index j = 0; j < snap.grid.y.size(); ++j) {
                const double dx = snap.grid.x(i) - snap.mid_x;
                const double dy = snap.grid.y(j) - snap.mid_y;
                if (dx * dx + dy * dy > r_disc * r_disc) continue;
                w_lo = std::min(w_lo, snap.grid.w(i, j));
                w_hi = std::max(w_hi, snap.grid.w(i, j));
            }
        const double w_abs = std::max(snap.grid.w.maxCoeff(), -snap.min_w);
        snap.fringe_contrast =
            (w_hi > w_lo && w_abs > 0.0) ? (w_hi - w_lo) / (2.0 * w_abs) : 0.0;
        out.push_back(std::move(snap));
    }
    return out;
}

// Plain text matrix with axis header lines.  Row i holds W(x_i, y_j) for all
// j, so the file loads directly as an (n_x, n_y) array once the leading #
// lines are skipped as comments.
inline void write_wigner_grid(const WignerSnapshot& snap, const std::string& path) {
    std::FILE* f = std::fopen(path.c_str(), "w");
    if (!f) throw std::runtime_error("write_wigner_grid: cannot open " + path);
    std::fprintf(f, "# time %.17g\n", snap.time);
    std::fprintf(f, "# x");
    for (Eigen::Index i = 0; i < snap.grid.x.size(); ++i)
        std::fprintf(f, " %.17g", snap.grid.x(i));
    std::fprintf(f, "\n# y");
    for (Eigen::Index j = 0; j < snap.grid.y.size(); ++j)
        std::fprintf(f, " %.17g", snap.grid.y(j));
    std::fprintf(f, "\n");
    for (Eigen::Index i = 0; i < snap.grid.x.size(); ++i) {
        for (Eigen::Index j = 0; j < snap.grid.y.size(); ++j)
            std::fprintf(f, j == 0 ? "%.17g" : " %.17g", snap.grid.w(i, j));
        std::fprintf(f, "\n");
    }
    const bool bad = std::ferror(f) != 0;
    std::fclose(f);
    if (bad) throw std::runtime_error("write_wigner_grid: write failed for " + path);
}

inline std::string wigner_grid_name(size_t index) {
    char name[32];
    std::snprintf(name, sizeof name, "wigner_%03zu.txt", index);
    return name;
}

inline nlohmann::json wigner_metrics_json(const std::vector<WignerSnapshot>& snaps) {
    nlohmann::json arr = nlohmann::json::array();
    for (size_t i = 0; i < snaps.size(); ++i) {
        const WignerSnapshot& s = snaps[i];
        arr.push_back({{"file", wigner_grid_name(i)},
                       {"time", s.time},
                       {"min_w", s.min_w},
                       {"min_x", s.min_x},
                       {"min_y", s.min_y},
                       {"integral", s.integral},
                       {"purity_quadrature", s.purity_quadrature},
                       {"purity_exact", s.purity_exact},
                       {"phase_central", s.phase_central},
                       {"mid_x", s.mid_x},
                       {"mid_y", s.mid_y},
                       {"fringe_contrast", s.fringe_contrast}});
    }
    return arr;
}

struct Report {
    nlohmann::json doc;
    bool pass = false;
};

// Confronts the fitted Gaussian echo time with the semiclassical prediction
// and collects the headline run diagnostics.  pass reflects only the time
// scale comparison; leakage and fit availability are reported alongside.
inline Report make_report(const RunConfig& cfg, const RunResult& r, double tau_tolerance = 0.15) {
    Report rep;
    nlohmann::json& d = rep.doc;
    d["mode"] = to_string(cfg.mode);
    d["initial_state"] = to_string(cfg.initial_state);
    d["theory_regime"] = to_string(cfg.theory_regime);
    d["cutoffs"] = {{"central", r.cutoff_central}, {"environment", r.cutoff_environment}};
    d["strength"] = r.strength;
    d["strength_operator"] = std::isfinite(r.strength_operator)
                                 ? nlohmann::json(r.strength_operator)
                                 : nlohmann::json(nullptr);
    d["predicted_tau"] = r.tau_dec;
    d["predicted_tau_operator"] = std::isfinite(r.tau_dec_operator)
                                      ? nlohmann::json(r.tau_dec_operator)
                                      : nlohmann::json(nullptr);
    d["tau_p1"] = r.tau_p1;
    d["tau_p2"] = r.tau_p2;
    d["leakage_max"] = r.leakage_max;
    d["tau_tolerance"] = tau_tolerance;

    d["config"] = config_to_json(cfg);

    const TimeSeries& s = r.series;
    double fitted = std::numeric_limits<double>::quiet_NaN();
    try {
        const GaussianFit fit = gaussian_fit(s.times, s.F_e_numeric);
        fitted = fit.tau;
        d["fitted_tau"] = fitted;
        d["fit_residual_rms"] = fit.residual_rms;
        d["fit_points"] = fit.points;
    } catch (const FitError& e) {
        d["fitted_tau"] = nullptr;
        d["fit_error"] = e.what();
    }
    if (std::isfinite(fitted) && r.tau_dec > 0.0 && std::isfinite(r.tau_dec)) {
        const double rel = std::abs(fitted - r.tau_dec) / r.tau_dec;
        d["tau_relative_error"] = rel;
        rep.pass = rel <= tau_tolerance;
    } else {
        d["tau_relative_error"] = nullptr;
        rep.pass = false;
    }
    d["tau_within_tolerance"] = rep.pass;

    // First interpolated crossing of I = 1/2, null when the run never gets
    // there (single-branch runs normally do not).
    nlohmann::json half = nullptr;
    for (size_t i = 1; i < s.size(); ++i) {
        if (s.I_numeric[i] <= 0.5 && s.I_numeric[i - 1] > 0.5) {
            const double f =
                (0.5 - s.I_numeric[i - 1]) / (s.I_numeric[i] - s.I_numeric[i - 1]);
            half = s.times[i - 1] + f * (s.times[i] - s.times[i - 1]);
            break;
        }
    }
    d["half_crossing_time"] = half;

    const double t_late = 0.75 * cfg.t_max;
    double max_late = -1.0, argmax_late = 0.0;
    for (size_t i = 0; i < s.size(); ++i) {
        if (s.times[i] >= t_late && s.I_numeric[i] > max_late) {
            max_late = s.I_numeric[i];
            argmax_late = s.times[i];
        }
    }
    d["late_window"] = {{"start", t_late}, {"max_I", max_late}, {"argmax", argmax_late}};
    return rep;
}

} // namespace qcat
