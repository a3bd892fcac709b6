#include <catch2/catch_amalgamated.hpp>

#include <qcat/harness.hpp>
#include <qcat/theory.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace qcat;
using Catch::Approx;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const char* leaf) {
    fs::path p = fs::temp_directory_path() / leaf;
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

} // namespace

TEST_CASE("config parsing: defaults, overrides, unknown keys and bad types") {
    RunConfig def = parse_config(nlohmann::json::object());
    CHECK(def.model.gamma_c == 1.0);
    CHECK(def.model.gamma_e == Approx(0.6456));
    CHECK(def.model.delta_shift == Approx(1.2));
    CHECK(def.model.coupling_strength == Approx(0.01));
    CHECK(def.model.hbar == Approx(0.01));
    CHECK(def.j_c1 == Approx(0.2));
    CHECK(def.j_c2 == Approx(0.01));
    CHECK(def.j_e == Approx(0.1));
    CHECK(def.theta_c1 == 0.0);
    CHECK(def.t_max == Approx(600.0));
    CHECK(def.n_steps == 400);
    CHECK(def.cutoff_central == 0);
    CHECK(def.cutoff_environment == 0);
    CHECK(def.mode == RunMode::Echo);
    CHECK(def.initial_state == InitialState::Cat);
    CHECK(def.theory_regime == TheoryRegime::Averaged);
    CHECK(def.outputs.series);
    CHECK(def.outputs.fit);
    CHECK(def.outputs.wigner_times.empty());
    CHECK(def.outputs.wigner_points == 201);
    CHECK(def.out_dir == ".");
    CHECK(def.seed == 0);

    nlohmann::json full = {
        {"model",
         {{"gamma_c", 2.0},
          {"gamma_e", 1.5},
          {"delta_shift", 0.7},
          {"coupling_strength", 0.03},
          {"hbar", 0.05}}},
        {"cat",
         {{"j_c1", 0.4},
          {"j_c2", 0.02},
          {"j_e", 0.2},
          {"theta_c1", 0.1},
          {"theta_c2", -0.2},
          {"theta_e", 0.3}}},
        {"grid", {{"t_max", 50.0}, {"n_steps", 25}}},
        {"cutoffs", {{"central", 40}, {"environment", 30}}},
        {"mode", "full"},
        {"initial_state", "branch2"},
        {"theory_regime", "instantaneous"},
        {"outputs",
         {{"series", false}, {"fit", false}, {"wigner_times", {0.0, 10.0}}, {"wigner_points", 61}}},
        {"out_dir", "/tmp/somewhere"},
        {"seed", 7}};
    RunConfig c = parse_config(full);
    CHECK(c.model.gamma_c == 2.0);
    CHECK(c.model.hbar == 0.05);
    CHECK(c.j_c1 == 0.4);
    CHECK(c.theta_c2 == -0.2);
    CHECK(c.t_max == 50.0);
    CHECK(c.n_steps == 25);
    CHECK(c.cutoff_central == 40);
    CHECK(c.mode == RunMode::Full);
    CHECK(c.initial_state == InitialState::Branch2);
    CHECK(c.theory_regime == TheoryRegime::Instantaneous);
    CHECK_FALSE(c.outputs.series);
    CHECK(c.outputs.wigner_times == std::vector<double>{0.0, 10.0});
    CHECK(c.outputs.wigner_points == 61);
    CHECK(c.out_dir == "/tmp/somewhere");
    CHECK(c.seed == 7);

    // Serialization round trips through the parser.
    RunConfig rt = parse_config(config_to_json(c));
    CHECK(config_to_json(rt) == config_to_json(c));
    CHECK(config_to_json(RunConfig{}) == config_to_json(parse_config(nlohmann::json::object())));

    // Unknown keys are rejected at every level.
    CHECK_THROWS_AS(parse_config({{"modell", nlohmann::json::object()}}), ConfigError);
    CHECK_THROWS_AS(parse_config({{"model", {{"gamma_x", 1.0}}}}), ConfigError);
    CHECK_THROWS_AS(parse_config({{"outputs", {{"wigner_point", 10}}}}), ConfigError);
    CHECK_THROWS_AS(parse_config({{"cat", {{"j_c3", 0.1}}}}), ConfigError);

    // Type mismatches.
    CHECK_THROWS_AS(parse_config({{"model", {{"hbar", "big"}}}}), ConfigError);
    CHECK_THROWS_AS(parse_config({{"grid", {{"n_steps", 2.5}}}}), ConfigError);
    CHECK_THROWS_AS(parse_config({{"outputs", {{"series", 1}}}}), ConfigError);
    CHECK_THROWS_AS(parse_config({{"outputs", {{"wigner_times", {1.0, "a"}}}}}), ConfigError);
    CHECK_THROWS_AS(parse_config({{"mode", 3}}), ConfigError);

    // Enumeration values.
    CHECK_THROWS_AS(parse_config({{"mode", "fast"}}), ConfigError);
    CHECK_THROWS_AS(parse_config({{"initial_state", "both"}}), ConfigError);
    CHECK_THROWS_AS(parse_config({{"theory_regime", "exact"}}), ConfigError);

    // Semantic validation.
    CHECK_THROWS_AS(parse_config({{"grid", {{"n_steps", 0}}}}), ConfigError);
    CHECK_THROWS_AS(parse_config({{"grid", {{"n_steps", 1}}}}), ConfigError);
    CHECK_THROWS_AS(
        parse_config({{"grid", {{"t_max", 10.0}}}, {"outputs", {{"wigner_times", {11.0}}}}}),
        ConfigError);
    CHECK_THROWS_AS(parse_config({{"grid", {{"t_max", -1.0}}}}), ConfigError);
    CHECK_THROWS_AS(parse_config({{"cutoffs", {{"central", 1}}}}), ConfigError);
    CHECK_THROWS_AS(parse_config({{"cat", {{"j_c1", 0.0}}}}), ConfigError);
    CHECK_THROWS_AS(parse_config({{"out_dir", ""}}), ConfigError);
    CHECK_THROWS_AS(parse_config({{"outputs", {{"wigner_times", {-1.0}}}}}), ConfigError);
    CHECK_THROWS_AS(parse_config({{"model", {{"hbar", 0.0}}}}), ConfigError);

    fs::path dir = temp_dir("qcat_cfg_test");
    {
        std::ofstream out(dir / "good.json");
        out << R"({"grid": {"t_max": 10.0, "n_steps": 5}})";
    }
    RunConfig g = load_config((dir / "good.json").string());
    CHECK(g.t_max == 10.0);
    CHECK(g.n_steps == 5);
    {
        std::ofstream out(dir / "bad.json");
        out << "{not json";
    }
    CHECK_THROWS_AS(load_config((dir / "bad.json").string()), ConfigError);
    CHECK_THROWS_AS(load_config((dir / "missing.json").string()), ConfigError);
    fs::remove_all(dir);
}

TEST_CASE("automatic cutoffs follow the packet size") {
    CHECK(auto_cutoff(0.2, 0.01) == 66);
    CHECK(auto_cutoff(0.1, 0.01) == 46);
    CHECK(auto_cutoff(0.2, 0.04) == 33);
    CHECK(auto_cutoff(0.1, 0.04) == 26);
    CHECK(auto_cutoff(1.0, 0.01) == 190);

    RunConfig c;
    CHECK(resolve_cutoff_central(c) == 66);  // the larger central packet wins
    CHECK(resolve_cutoff_environment(c) == 46);
    c.cutoff_central = 32;
    c.cutoff_environment = 24;
    CHECK(resolve_cutoff_central(c) == 32);
    CHECK(resolve_cutoff_environment(c) == 24);
}

TEST_CASE("gaussian echo fit: exact recovery, window filtering, failure modes") {
    const double tau = 41.608916;
    std::vector<double> t, fe;
    for (int k = 0; k <= 100; ++k) {
        t.push_back(1.5 * k);
        fe.push_back(std::exp(-(t.back() / tau) * (t.back() / tau)));
    }
    CHECK(fit_gaussian_tau(t, fe) == Approx(tau).epsilon(1e-10));

    // Samples outside the overlap window must not influence the estimate:
    // corrupt them and require the identical result.
    std::vector<double> fe2 = fe;
    for (size_t i = 0; i < fe2.size(); ++i)
        if (fe2[i] > 0.9) fe2[i] = 1.0;
        else if (fe2[i] < 0.2) fe2[i] = 1e-9;
    CHECK(fit_gaussian_tau(t, fe2) == fit_gaussian_tau(t, fe));

    // Too few points inside the window.
    std::vector<double> t3 = {1.0, 2.0, 3.0, 4.0};
    std::vector<double> f3 = {0.5, 0.5, 0.5, 0.5};
    CHECK_THROWS_AS(fit_gaussian_tau(t3, f3), FitError);
    std::vector<double> f4(t.size(), 0.95);  // nothing ever decays into the window
    CHECK_THROWS_AS(fit_gaussian_tau(t, f4), FitError);
    CHECK_THROWS_AS(fit_gaussian_tau(t3, f4), std::invalid_argument);
}

TEST_CASE("time series csv: byte-identical round trip") {
    TimeSeries s;
    for (int k = 0; k < 7; ++k) {
        const double t = 0.1 * k;
        s.times.push_back(t);
        s.I_numeric.push_back(1.0 / (1.0 + t));
        s.I_theory.push_back(std::exp(-t * t / 3.0));
        s.F_e_numeric.push_back(std::cos(t) * std::cos(t));
        s.F_e_theory.push_back(std::exp(-t * t));
        s.I1_numeric.push_back(1.0 - 1e-17 * k);
        s.I2_numeric.push_back(1.0 / 3.0 + k);
        s.I1_theory.push_back(std::sqrt(2.0) * k);
        s.I2_theory.push_back(4.0 / 7.0);
        s.leakage.push_back(1e-12 * k);
    }
    fs::path dir = temp_dir("qcat_csv_test");
    const std::string p1 = (dir / "a.csv").string();
    const std::string p2 = (dir / "b.csv").string();
    write_csv(s, p1);
    TimeSeries r = read_csv(p1);
    REQUIRE(r.size() == s.size());
    for (size_t i = 0; i < s.size(); ++i) {
        CHECK(r.times[i] == s.times[i]);
        CHECK(r.I_numeric[i] == s.I_numeric[i]);
        CHECK(r.I_theory[i] == s.I_theory[i]);
        CHECK(r.F_e_numeric[i] == s.F_e_numeric[i]);
        CHECK(r.F_e_theory[i] == s.F_e_theory[i]);
        CHECK(r.I1_numeric[i] == s.I1_numeric[i]);
        CHECK(r.I2_numeric[i] == s.I2_numeric[i]);
        CHECK(r.I1_theory[i] == s.I1_theory[i]);
        CHECK(r.I2_theory[i] == s.I2_theory[i]);
        CHECK(r.leakage[i] == s.leakage[i]);
    }
    write_csv(r, p2);
    CHECK(slurp(p1) == slurp(p2));

    {
        std::ofstream out(dir / "hdr.csv");
        out << "times,purity\n0,1\n";
    }
    CHECK_THROWS_WITH(read_csv((dir / "hdr.csv").string()),
                      Catch::Matchers::ContainsSubstring("unexpected header"));
    {
        std::ofstream out(dir / "short.csv");
        out << kSeriesHeader << "\n1,2,3\n";
    }
    CHECK_THROWS_WITH(read_csv((dir / "short.csv").string()),
                      Catch::Matchers::ContainsSubstring("expected 10 columns"));
    fs::remove_all(dir);
}

TEST_CASE("coupling off: every propagation mode leaves the purities at one") {
    RunConfig base;
    base.model.hbar = 0.1;
    base.model.coupling_strength = 0.0;
    base.t_max = 40.0;
    base.n_steps = 8;
    base.outputs.series = false;

    for (RunMode m : {RunMode::Full, RunMode::Echo, RunMode::Effective}) {
        base.mode = m;
        RunResult r = run_decoherence_experiment(base);
        REQUIRE(r.series.size() == 9);
        for (size_t i = 0; i < r.series.size(); ++i) {
            CHECK(std::abs(r.series.I_numeric[i] - 1.0) < 1e-9);
            CHECK(std::abs(r.series.F_e_numeric[i] - 1.0) < 1e-9);
            CHECK(std::abs(r.series.I1_numeric[i] - 1.0) < 1e-9);
            CHECK(std::abs(r.series.I2_numeric[i] - 1.0) < 1e-9);
        }
        CHECK(r.leakage_max < 1e-9);
        CHECK(std::isinf(r.tau_dec));  // no dephasing without coupling
        for (size_t i = 0; i < r.series.size(); ++i) {
            CHECK(r.series.F_e_theory[i] == 1.0);
            CHECK(r.series.I_theory[i] == 1.0);
        }
    }
}

TEST_CASE("picture invariance: full and echo runs give identical purity columns") {
    RunConfig cfg;
    cfg.model.hbar = 0.1;
    cfg.t_max = 200.0;
    cfg.n_steps = 20;
    cfg.outputs.series = false;

    cfg.mode = RunMode::Full;
    RunResult rf = run_decoherence_experiment(cfg);
    cfg.mode = RunMode::Echo;
    RunResult re = run_decoherence_experiment(cfg);
    REQUIRE(rf.series.size() == re.series.size());
    for (size_t i = 0; i < rf.series.size(); ++i) {
        CHECK(std::abs(rf.series.I_numeric[i] - re.series.I_numeric[i]) < 1e-9);
        CHECK(std::abs(rf.series.F_e_numeric[i] - re.series.F_e_numeric[i]) < 1e-9);
        CHECK(std::abs(rf.series.I1_numeric[i] - re.series.I1_numeric[i]) < 1e-9);
        CHECK(std::abs(rf.series.I2_numeric[i] - re.series.I2_numeric[i]) < 1e-9);
    }
}

TEST_CASE("packet swap: branch columns exchange, shared columns are invariant") {
    RunConfig a;
    a.model.hbar = 0.1;
    a.t_max = 150.0;
    a.n_steps = 15;
    a.outputs.series = false;
    RunConfig b = a;
    std::swap(b.j_c1, b.j_c2);

    RunResult ra = run_decoherence_experiment(a);
    RunResult rb = run_decoherence_experiment(b);
    REQUIRE(ra.series.size() == rb.series.size());
    for (size_t i = 0; i < ra.series.size(); ++i) {
        CHECK(std::abs(ra.series.I_numeric[i] - rb.series.I_numeric[i]) < 1e-11);
        CHECK(std::abs(ra.series.F_e_numeric[i] - rb.series.F_e_numeric[i]) < 1e-11);
        CHECK(std::abs(ra.series.I1_numeric[i] - rb.series.I2_numeric[i]) < 1e-11);
        CHECK(std::abs(ra.series.I2_numeric[i] - rb.series.I1_numeric[i]) < 1e-11);
    }
    CHECK(ra.tau_dec == Approx(rb.tau_dec).epsilon(1e-12));
    CHECK(ra.tau_p1 == Approx(rb.tau_p2).epsilon(1e-12));
    CHECK(ra.tau_p2 == Approx(rb.tau_p1).epsilon(1e-12));
    CHECK(ra.strength_operator == Approx(rb.strength_operator).epsilon(1e-9));
}

TEST_CASE("initial branch run aliases the matching branch columns") {
    RunConfig cfg;
    cfg.model.hbar = 0.1;
    cfg.t_max = 100.0;
    cfg.n_steps = 10;
    cfg.initial_state = InitialState::Branch1;
    cfg.outputs.series = false;
    RunResult r = run_decoherence_experiment(cfg);
    for (size_t i = 0; i < r.series.size(); ++i) {
        CHECK(r.series.I_numeric[i] == r.series.I1_numeric[i]);
        CHECK(r.series.I_theory[i] == r.series.I1_theory[i]);
    }
}

TEST_CASE("effective propagation: dense and diagonal backends agree across the size limit") {
    RunConfig cfg;
    cfg.model.hbar = 0.1;
    cfg.model.delta_shift = 1.23;  // avoids exact reflection degeneracies of the well
    cfg.mode = RunMode::Effective;
    cfg.t_max = 100.0;
    cfg.n_steps = 10;
    cfg.outputs.series = false;

    cfg.cutoff_central = 60;  // 3600 states, dense spectral backend
    cfg.cutoff_environment = 60;
    RunResult dense = run_decoherence_experiment(cfg);

    cfg.cutoff_central = 80;  // 6400 states, diagonal backend
    cfg.cutoff_environment = 80;
    RunResult diag = run_decoherence_experiment(cfg);

    REQUIRE(dense.series.size() == diag.series.size());
    // Both boxes hold the packets to far below the leakage floor, so the
    // observable columns must agree to solver precision.
    for (size_t i = 0; i < dense.series.size(); ++i) {
        CHECK(std::abs(dense.series.I_numeric[i] - diag.series.I_numeric[i]) < 1e-9);
        CHECK(std::abs(dense.series.F_e_numeric[i] - diag.series.F_e_numeric[i]) < 1e-9);
        CHECK(std::abs(dense.series.I1_numeric[i] - diag.series.I1_numeric[i]) < 1e-9);
        CHECK(std::abs(dense.series.I2_numeric[i] - diag.series.I2_numeric[i]) < 1e-9);
    }
    CHECK(dense.leakage_max < 1e-10);
    CHECK(diag.leakage_max < 1e-10);
}

TEST_CASE("report: pass and fail cases, half crossing, late window") {
    RunConfig cfg;
    cfg.t_max = 100.0;
    RunResult r;
    r.tau_dec = 40.0;
    r.tau_p1 = 80.0;
    r.tau_p2 = 300.0;
    r.leakage_max = 1e-12;
    for (int k = 0; k <= 100; ++k) {
        const double t = static_cast<double>(k);
        r.series.times.push_back(t);
        r.series.F_e_numeric.push_back(echo_overlap_gaussian(t, 40.0));
        r.series.I_numeric.push_back(cat_purity(t, 80.0, 300.0, 40.0));
        r.series.F_e_theory.push_back(echo_overlap_gaussian(t, 40.0));
        r.series.I_theory.push_back(cat_purity(t, 80.0, 300.0, 40.0));
        r.series.I1_numeric.push_back(branch_purity(t, 80.0));
        r.series.I2_numeric.push_back(branch_purity(t, 300.0));
        r.series.I1_theory.push_back(branch_purity(t, 80.0));
        r.series.I2_theory.push_back(branch_purity(t, 300.0));
        r.series.leakage.push_back(1e-12);
    }

    Report ok = make_report(cfg, r);
    CHECK(ok.pass);
    CHECK(ok.doc.at("tau_within_tolerance").get<bool>());
    CHECK(ok.doc.at("fitted_tau").get<double>() == Approx(40.0).epsilon(1e-6));
    CHECK(ok.doc.at("tau_relative_error").get<double>() < 1e-6);
    CHECK(ok.doc.at("fit_residual_rms").get<double>() < 1e-9);
    CHECK(ok.doc.at("fit_points").get<int>() >= 5);
    // The full configuration rides along and parses back unchanged.
    RunConfig echoed = parse_config(ok.doc.at("config"));
    CHECK(echoed.t_max == cfg.t_max);
    CHECK(config_to_json(echoed) == config_to_json(cfg));

    // Half crossing of the composite purity, against direct interpolation.
    const auto& I = r.series.I_numeric;
    double expect = 0.0;
    for (size_t i = 1; i < I.size(); ++i)
        if (I[i] <= 0.5 && I[i - 1] > 0.5) {
            expect = r.series.times[i - 1] + (0.5 - I[i - 1]) / (I[i] - I[i - 1]);
            break;
        }
    CHECK(ok.doc.at("half_crossing_time").get<double>() == Approx(expect).margin(1e-12));
    CHECK(ok.doc.at("late_window").at("start").get<double>() == 75.0);
    CHECK(ok.doc.at("late_window").at("max_I").get<double>() == Approx(I[75]).margin(1e-12));
    CHECK(ok.doc.at("late_window").at("argmax").get<double>() == 75.0);

    // A prediction far from the fitted value must fail the report.
    RunResult wrong = r;
    wrong.tau_dec = 60.0;
    Report bad = make_report(cfg, wrong);
    CHECK_FALSE(bad.pass);
    CHECK_FALSE(bad.doc.at("tau_within_tolerance").get<bool>());
    CHECK(bad.doc.at("tau_relative_error").get<double>() > 0.15);

    // No decay into the fit window: the report degrades but stays readable.
    RunResult flat = r;
    for (auto& f : flat.series.F_e_numeric) f = 0.99;
    Report nofit = make_report(cfg, flat);
    CHECK_FALSE(nofit.pass);
    CHECK(nofit.doc.at("fitted_tau").is_null());
    CHECK(nofit.doc.contains("fit_error"));
}

TEST_CASE("echo experiment at coarse hbar matches the operator prediction") {
    RunConfig cfg;
    cfg.model.hbar = 0.04;
    cfg.t_max = 200.0;
    cfg.n_steps = 50;
    fs::path dir = temp_dir("qcat_run_test");
    cfg.out_dir = dir.string();

    RunResult r = run_decoherence_experiment(cfg);
    CHECK(r.cutoff_central == 33);
    CHECK(r.cutoff_environment == 26);
    CHECK(r.strength == Approx(0.05776).epsilon(1e-12));
    CHECK(r.tau_dec ==
          Approx(decoherence_time(dephasing_strength_classical(0.2, 0.01, 0.1), 0.01, 0.04))
              .epsilon(1e-12));
    CHECK(r.tau_p1 == Approx(88.38834765).epsilon(1e-9));
    CHECK(r.tau_p2 == Approx(395.28470752).epsilon(1e-9));
    // Operator strength on the time-averaged coupling, against the closed
    // form 16 j_e ((j_c1 - j_c2)^2 + hbar (j_c1 + j_c2)).
    CHECK(r.strength_operator == Approx(0.07120).epsilon(1e-3));

    CHECK(std::abs(r.series.I_numeric[0] - 1.0) < 1e-9);
    CHECK(std::abs(r.series.F_e_numeric[0] - 1.0) < 1e-9);
    CHECK(r.leakage_max < 1e-8);

    // The operator strength is the exact short-time curvature of -ln F_e.
    const double t3 = r.series.times[3];
    const double k3 = -std::log(r.series.F_e_numeric[3]) / (t3 * t3);
    const double k_op = 1.0 / (r.tau_dec_operator * r.tau_dec_operator);
    CHECK(std::abs(k3 / k_op - 1.0) < 0.05);

    // Over the fit window the decay is slower than Gaussian (the small
    // environment packet holds only a few quanta here), so the fitted time
    // sits above the short-time prediction by a saturation bias.
    const double fitted = fit_gaussian_tau(r.series.times, r.series.F_e_numeric);
    CHECK(fitted > r.tau_dec_operator);
    CHECK(fitted < 1.4 * r.tau_dec_operator);

    Report rep = make_report(cfg, r, 0.25);
    CHECK(rep.pass);
    CHECK_FALSE(rep.doc.at("half_crossing_time").is_null());

    // The series lands on disk because outputs.series defaults to true.
    TimeSeries back = read_csv((dir / "series.csv").string());
    REQUIRE(back.size() == r.series.size());
    CHECK(back.I_numeric[5] == r.series.I_numeric[5]);
    fs::remove_all(dir);
}

TEST_CASE("wigner snapshots: cat negativity, normalization, quadrature purity") {
    RunConfig cfg;
    cfg.model.hbar = 0.08;
    cfg.j_c1 = 0.5;   // packet radius 2.5 in ladder units
    cfg.j_c2 = 0.02;  // packet radius 0.5
    cfg.outputs.series = false;
    cfg.outputs.wigner_times = {0.0};
    cfg.outputs.wigner_points = 81;

    std::vector<WignerSnapshot> snaps = run_wigner_snapshots(cfg);
    REQUIRE(snaps.size() == 1);
    const WignerSnapshot& s = snaps[0];
    CHECK(s.time == 0.0);
    CHECK(s.grid.x.size() == 81);
    CHECK(s.grid.y.size() == 81);
    const double span = 1.6 * 2.5 * std::sqrt(2.0 * 0.08);
    CHECK(s.grid.x(0) == Approx(-span));
    CHECK(s.grid.x(80) == Approx(span));

    CHECK(s.min_w < -0.05);                       // interference fringes go negative
    CHECK(s.integral == Approx(1.0).margin(0.01));
    CHECK(s.purity_exact == Approx(1.0).margin(1e-6));
    CHECK(std::abs(s.purity_quadrature - s.purity_exact) < 0.02);
    CHECK(std::abs(s.phase_central) < 1e-6);  // both packets start on the positive axis
    // The fringes live between the packets, near the midpoint of the chord.
    CHECK(s.min_x > 0.0);
    CHECK(s.min_x < 2.5 * std::sqrt(2.0 * 0.08));
    const double x1 = std::sqrt(2.0 * 0.5), x2 = std::sqrt(2.0 * 0.02);
    CHECK(s.mid_x == Approx(0.5 * (x1 + x2)).margin(0.03));
    CHECK(std::abs(s.mid_y) < 0.03);
    // A pure cat carries full-depth fringes around the midpoint.
    CHECK(s.fringe_contrast > 0.5);
    CHECK(s.fringe_contrast < 1.1);

    fs::path dir = temp_dir("qcat_wigner_test");
    write_wigner_grid(s, (dir / "w.txt").string());
    {
        std::ifstream in(dir / "w.txt");
        std::string time_line, x_line, y_line;
        std::getline(in, time_line);
        std::getline(in, x_line);
        std::getline(in, y_line);
        CHECK(time_line.rfind("# time ", 0) == 0);
        REQUIRE(x_line.rfind("# x ", 0) == 0);
        REQUIRE(y_line.rfind("# y ", 0) == 0);
        std::istringstream xs(x_line.substr(4));
        std::vector<double> xv;
        double v;
        while (xs >> v) xv.push_back(v);
        REQUIRE(xv.size() == 81);
        CHECK(xv.front() == Approx(-span));
        // One matrix row per x sample, 81 values each, first row matches.
        std::string row;
        REQUIRE(std::getline(in, row));
        std::istringstream rs(row);
        std::vector<double> wv;
        while (rs >> v) wv.push_back(v);
        REQUIRE(wv.size() == 81);
        CHECK(wv[3] == Approx(s.grid.w(0, 3)).epsilon(1e-15));
        int rows = 1;
        while (std::getline(in, row))
            if (!row.empty()) ++rows;
        CHECK(rows == 81);
    }
    nlohmann::json metrics = wigner_metrics_json(snaps);
    REQUIRE(metrics.size() == 1);
    CHECK(metrics[0].at("file") == "wigner_000.txt");
    CHECK(metrics[0].at("min_w").get<double>() == s.min_w);
    CHECK(metrics[0].at("fringe_contrast").get<double>() == s.fringe_contrast);
    fs::remove_all(dir);

    cfg.outputs.wigner_times.clear();
    CHECK_THROWS_AS(run_wigner_snapshots(cfg), ConfigError);
}
