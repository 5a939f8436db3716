#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include <CLI11.hpp>

#include "abi.hpp"
#include "compare.hpp"
#include "config.hpp"
#include "dmhd.hpp"
#include "entropy.hpp"
#include "galerkin.hpp"
#include "mollify.hpp"
#include "snapshot.hpp"

namespace abimhd {

inline constexpr const char* version_string = "abimhd 0.1.0";

namespace exit_code {
inline constexpr int ok = 0;
inline constexpr int io = 1;
inline constexpr int config = 2;
inline constexpr int numerical = 3;
inline constexpr int check_failed = 4;
} // namespace exit_code

// Smooth positive h with mean 1 and divergence-free B, |k_i| <= kmax.
inline std::pair<ScalarField, VectorField3> random_smooth_data(GridSpec g, std::uint64_t seed, double amp, int kmax)
{
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    auto field = [&](double scale) {
        std::vector<std::array<double, 5>> terms;
        for (int a = -kmax; a <= kmax; ++a)
            for (int b = -kmax; b <= kmax; ++b)
                for (int c = 0; c <= kmax; ++c) {
                    if (c == 0 && (b < 0 || (b == 0 && a <= 0))) continue;
                    double w = scale / (1.0 + a * a + b * b + c * c);
                    terms.push_back({double(a), double(b), double(c), w * u(rng), w * u(rng)});
                }
        return ScalarField::sample(g, [&](double x, double y, double z) {
            double s = 0.0;
            for (const auto& t : terms) {
                double th = two_pi * (t[0] * x + t[1] * y + t[2] * z);
                s += t[3] * std::cos(th) + t[4] * std::sin(th);
            }
            return s;
        });
    };
    ScalarField h = field(amp);
    for (double& x : h.v) x += 1.0;
    VectorField3 B(field(amp), field(amp), field(amp));
    return {h, project_solenoidal(B)};
}

namespace cli_detail {

struct Context {
    Config cfg;
    std::filesystem::path out;
    std::filesystem::path config_dir = ".";
    std::uint64_t seed = 1;
    bool quiet = false;
    std::string subcommand;

    std::ofstream open(const std::string& name) const
    {
        std::ofstream os(out / name);
        if (!os) throw std::runtime_error("cannot write " + (out / name).string());
        os.precision(17);
        return os;
    }

    std::string path(const std::string& name) const { return (out / name).string(); }

    void say(const std::string& line) const
    {
        if (!quiet) std::cout << line << '\n';
    }

    // Fails on unknown keys, then records the full effective configuration.
    void write_manifest() const
    {
        cfg.reject_unused();
        std::ofstream os = open("manifest.txt");
        os << "# " << version_string << '\n';
        os << "# subcommand: " << subcommand << '\n';
        os << "# config: " << cfg.origin() << '\n';
        os << "# reproduce with: abimhd " << subcommand << " --config manifest.txt --seed " << seed << '\n';
        os << cfg.echo();
    }
};

inline GridSpec grid_from(const Context& c, int fallback = 16)
{
    long long n = c.cfg.get_int("grid.n", fallback);
    if (n < 4 || n % 2 || n > 1024) throw ConfigError("grid.n must be even and in [4, 1024], got " + std::to_string(n));
    return GridSpec(int(n));
}

inline std::pair<ScalarField, VectorField3> initial_from(const Context& c, GridSpec g)
{
    std::string sc = c.cfg.get_string("initial.scenario", "single_mode");
    if (sc == "single_mode") {
        double ha = c.cfg.get_double("initial.h_amp", 0.2);
        double ba = c.cfg.get_double("initial.b_amp", 0.3);
        if (!(std::abs(ha) < 1.0)) throw ConfigError("initial.h_amp must satisfy |h_amp| < 1");
        return single_mode_data(g, ha, ba);
    }
    if (sc == "uniform") {
        double h = c.cfg.get_double("initial.h", 1.0);
        if (!(h > 0.0)) throw ConfigError("initial.h must be positive");
        return {ScalarField(g, h), VectorField3(g)};
    }
    if (sc == "random") {
        double amp = c.cfg.get_double("initial.amp", 0.1);
        long long kmax = c.cfg.get_int("initial.kmax", 2);
        if (!(amp > 0.0) || kmax < 1 || kmax > 8) throw ConfigError("initial.amp must be positive, kmax in [1, 8]");
        auto d = random_smooth_data(g, c.seed, amp, int(kmax));
        if (!(min_value(d.first) > 0.0)) throw ConfigError("initial.amp too large: random density is not positive");
        return d;
    }
    if (sc == "snapshot") {
        std::filesystem::path p = c.cfg.require_string("initial.path");
        if (p.is_relative()) p = c.config_dir / p;
        Snapshot s = read_snapshot(p.string());
        if (s.components.size() != 4) throw ConfigError("initial snapshot must hold (h, B1, B2, B3)");
        if (!(s.grid == g)) throw ConfigError("initial snapshot grid differs from grid.n");
        return {s.components[0], VectorField3(s.components[1], s.components[2], s.components[3])};
    }
    throw ConfigError("initial.scenario must be single_mode, uniform, random or snapshot; got '" + sc + "'");
}

inline void positive(double x, const char* key)
{
    if (!(x > 0.0)) throw ConfigError(std::string(key) + " must be positive");
}

inline int step_count(double T, double dt, const char* what)
{
    double s = T / dt;
    if (!(s >= 0.0) || s > 1e8) throw ConfigError(std::string(what) + ": T/dt out of range");
    return int(std::ceil(s - 1e-9));
}

// ---------------------------------------------------------------------------

inline int abi_run_cmd(Context& c)
{
    GridSpec g = grid_from(c, 32);
    auto [h0, B0] = initial_from(c, g);
    double dt = c.cfg.get_double("abi.dt", 1e-3);
    double T = c.cfg.get_double("abi.T", 0.1);
    double cfl = c.cfg.get_double("abi.cfl", 0.4);
    std::string data = c.cfg.get_string("abi.data", "rest");
    double d_amp = c.cfg.get_double("abi.d_amp", 0.2);
    positive(dt, "abi.dt");
    positive(cfl, "abi.cfl");
    if (data != "rest" && data != "consistent") throw ConfigError("abi.data must be rest or consistent");
    c.write_manifest();

    AbiState s0;
    if (data == "rest") {
        s0 = {h0, B0, VectorField3(g), VectorField3(g)};
    } else {
        VectorField3 D0{ScalarField(g), ScalarField(g),
                        ScalarField::sample(g, [&](double x, double, double) { return d_amp * std::sin(two_pi * x); })};
        s0 = abi_consistent_state(B0, D0);
    }
    write_snapshot(c.path("abi_initial.abim"), s0.components());
    std::ofstream csv = c.open("abi.csv");
    csv << "t,entropy,p_cross,h_consistency,div_B,div_D,min_h,max_v\n";
    AbiStepOptions opt;
    opt.cfl = cfl;
    int steps = step_count(T, dt, "abi-run");
    double step = steps ? T / steps : 0.0;
    AbiState fin = abi_run(s0, step, steps, [&](int, double t, const AbiState& s) {
        ConstraintNorms k = abi_constraints(s);
        csv << t << ',' << abi_entropy(s) << ',' << k.p_cross << ',' << k.h_consistency << ',' << k.div_B << ','
            << k.div_D << ',' << min_value(s.h) << ',' << abi_max_velocity(s) << '\n';
    }, opt);
    write_snapshot(c.path("abi_final.abim"), fin.components());
    c.say("abi-run: " + std::to_string(steps) + " steps, final entropy " + Config::format(abi_entropy(fin)));
    return exit_code::ok;
}

inline int dmhd_run_cmd(Context& c)
{
    GridSpec g = grid_from(c);
    auto [h0, B0] = initial_from(c, g);
    DmhdStepOptions opt;
    opt.c_par = c.cfg.get_double("dmhd.c_par", opt.c_par);
    double dt = c.cfg.get_double("dmhd.dt", 0.0);
    double T = c.cfg.get_double("dmhd.T", 0.01);
    positive(opt.c_par, "dmhd.c_par");
    if (dt < 0.0) throw ConfigError("dmhd.dt must be nonnegative (0 picks half the stability bound)");
    c.write_manifest();

    DmhdState s0{h0, B0};
    if (dt == 0.0) dt = 0.5 * dmhd_max_dt(s0, opt.c_par);
    int steps = step_count(T, dt, "dmhd-run");
    double step = steps ? T / steps : 0.0;
    write_snapshot(c.path("dmhd_initial.abim"), h0, B0);
    std::ofstream csv = c.open("energy.csv");
    csv << "t,energy,dissipation,mass,div_B,min_h\n";
    DmhdState fin = dmhd_run(s0, step, steps, [&](int, double t, const DmhdState& s) {
        DmhdDiagnostics d = dmhd_diagnostics(s, t);
        csv << d.t << ',' << d.energy << ',' << d.dissipation << ',' << d.mass << ',' << d.div_B << ',' << d.min_h
            << '\n';
    }, opt);
    write_snapshot(c.path("dmhd_final.abim"), fin.h, fin.B);
    c.say("dmhd-run: " + std::to_string(steps) + " steps, final energy " + Config::format(energy(fin)));
    return exit_code::ok;
}

inline int galerkin_run_cmd(Context& c)
{
    GalerkinConfig gc;
    gc.N = int(c.cfg.get_int("galerkin.N", gc.N));
    gc.eps = c.cfg.get_double("galerkin.eps", gc.eps);
    gc.l = int(c.cfg.get_int("galerkin.l", gc.l));
    gc.dt = c.cfg.get_double("galerkin.dt", gc.dt);
    gc.T = c.cfg.get_double("galerkin.T", gc.T);
    gc.grid_n = int(c.cfg.get_int("grid.n", 0));
    std::string split = c.cfg.get_string("galerkin.splitting", "auto");
    gc.picard = c.cfg.get_bool("galerkin.picard", false);
    gc.picard_tol = c.cfg.get_double("galerkin.picard_tol", gc.picard_tol);
    gc.picard_max_iter = int(c.cfg.get_int("galerkin.picard_max_iter", gc.picard_max_iter));
    gc.sigma = c.cfg.get_double("galerkin.sigma", gc.sigma);
    if (split == "auto") gc.splitting = Splitting::automatic;
    else if (split == "on") gc.splitting = Splitting::on;
    else if (split == "off") gc.splitting = Splitting::off;
    else throw ConfigError("galerkin.splitting must be auto, on or off");
    for (const auto& w : gc.validate()) std::cerr << "warning: " << w << '\n';
    BasisSpec basis(gc.N);
    GridSpec g = gc.grid(basis);
    basis.check_grid(g);
    auto [h0, B0] = initial_from(c, g);
    c.write_manifest();

    VectorField3 zero(g);
    GalerkinState fin;
    std::ofstream csv = c.open("galerkin.csv");
    if (!gc.picard) {
        csv << "t,lambda_n,dissipation,hyperviscous,dissipation_cum,hyperviscous_cum,min_h\n";
        GalerkinRun run = galerkin_run(h0, B0, zero, zero, gc, [&](const GalerkinState&, const GalerkinDiagnostics& d) {
            csv << d.t << ',' << d.lambda_n << ',' << d.dissipation << ',' << d.hyperviscous << ','
                << d.dissipation_cum << ',' << d.hyperviscous_cum << ',' << d.min_h << '\n';
        });
        fin = run.final_state;
    } else {
        PicardResult pr = picard_iterate(h0, B0, zero, zero, gc);
        csv << "t,lambda_n,min_h\n";
        for (const auto& s : pr.states) {
            GalerkinDiagnostics d = galerkin_diagnostics(basis, gc, s);
            csv << d.t << ',' << d.lambda_n << ',' << d.min_h << '\n';
        }
        std::ofstream pc = c.open("picard.csv");
        pc << "segment,t0,sigma,halvings,iteration,residual\n";
        for (std::size_t k = 0; k < pr.segments.size(); ++k) {
            const auto& sg = pr.segments[k];
            for (std::size_t i = 0; i < sg.residuals.size(); ++i) {
                pc << k << ',' << sg.t0 << ',' << sg.sigma << ',' << sg.halvings << ',' << i << ',' << sg.residuals[i]
                   << '\n';
            }
        }
        fin = pr.states.back();
    }
    write_snapshot(c.path("galerkin_final.abim"), fin.h, fin.B);
    write_coefficients(c.path("galerkin_final.coef"),
                       {std::vector<double>(fin.d_coeffs.data(), fin.d_coeffs.data() + fin.d_coeffs.size()),
                        std::vector<double>(fin.v_coeffs.data(), fin.v_coeffs.data() + fin.v_coeffs.size())});
    c.say("galerkin-run: reached t = " + Config::format(fin.t));
    return exit_code::ok;
}

inline int mollify_cmd(Context& c)
{
    std::vector<double> schedule = c.cfg.get_list("mollify.eps", {0.2, 0.1, 0.05});
    for (double e : schedule) check_mollifier_width(e);
    RoughInitialData data;
    if (c.cfg.has("mollify.data")) {
        std::filesystem::path p = c.cfg.require_string("mollify.data");
        if (p.is_relative()) p = c.config_dir / p;
        data = load_rough_initial_data(p.string());
    } else {
        GridSpec g = grid_from(c, 32);
        auto [h, B] = initial_from(c, g);
        data = RoughInitialData::from_density(h, B);
    }
    c.write_manifest();

    MonotonicityReport rep = lambda_monotonicity_check(data, schedule);
    auto tests = weak_star_test_functions();
    std::ofstream csv = c.open("mollify.csv");
    csv << "eps,lambda,mass,div_B\n";
    std::ofstream ws = c.open("weak_star.csv");
    ws << "eps";
    for (std::size_t i = 0; i < tests.size(); ++i) ws << ",f" << i;
    ws << '\n';
    for (std::size_t k = 0; k < rep.eps.size(); ++k) {
        csv << rep.eps[k] << ',' << rep.values[k] << ',' << rep.masses[k] << ',' << rep.div_B[k] << '\n';
        Mollified m = mollify(data, rep.eps[k]);
        ws << rep.eps[k];
        for (double e : weak_star_errors(data, m, tests)) ws << ',' << e;
        ws << '\n';
        write_snapshot(c.path("mollified_" + std::to_string(k) + ".abim"), {m.h, m.U[0], m.U[1], m.U[2], m.U[3]});
    }
    csv << "# reference=" << rep.reference << " max_excess=" << rep.max_excess << " max_wiggle=" << rep.max_wiggle
        << " atoms_h=" << data.h_atoms.size() << " atoms_U=" << data.U_atoms.size() << '\n';
    c.say("mollify: reference " + Config::format(rep.reference) + ", bounded " + (rep.bounded() ? "yes" : "no") +
          ", increasing " + (rep.increasing() ? "yes" : "no"));
    return exit_code::ok;
}

inline int compare_cmd(Context& c)
{
    GridSpec g = grid_from(c, 32);
    auto [h0, B0] = initial_from(c, g);
    CompareConfig cc;
    cc.dt = c.cfg.get_double("compare.dt", cc.dt);
    cc.t_end = c.cfg.get_double("compare.t_end", cc.t_end);
    cc.dmhd_dt_cap = c.cfg.get_double("compare.dmhd_dt_cap", cc.dmhd_dt_cap);
    cc.fit_t_min = c.cfg.get_double("compare.fit_t_min", cc.fit_t_min);
    cc.fit_t_max = c.cfg.get_double("compare.fit_t_max", cc.fit_t_max);
    cc.floor = c.cfg.get_double("compare.floor", cc.floor);
    cc.validate();
    c.write_manifest();

    CompareReport r = compare_run(h0, B0, cc, {}, false);
    std::string refused;
    try {
        fit_all(r, cc);
    } catch (const InvalidArgument& e) {
        refused = e.what();
    }
    std::ofstream csv = c.open("compare.csv");
    write_compare_csv(csv, r, refused.empty());
    if (!refused.empty()) csv << "# fit refused: " << refused << '\n';
    c.say(refused.empty() ? "compare: slopes h " + Config::format(r.h.slope) + ", B " + Config::format(r.B.slope) +
                                ", D " + Config::format(r.D.slope) + ", P " + Config::format(r.P.slope)
                          : "compare: " + refused);
    return exit_code::ok;
}

// DMHD trajectory as ABI states plus the matching frames.
struct TrajectoryParams {
    GridSpec grid;
    ScalarField h0;
    VectorField3 B0;
    double dt = 0.0;  // 0: half the stability bound
    int steps = 40;
    bool solution_frames = false;
    double frame_amp = 0.1;
};

inline TrajectoryParams trajectory_params(const Context& c, const std::string& section)
{
    TrajectoryParams p;
    p.grid = grid_from(c);
    std::tie(p.h0, p.B0) = initial_from(c, p.grid);
    p.dt = c.cfg.get_double(section + ".dt", 0.0);
    long long steps = c.cfg.get_int(section + ".steps", 40);
    std::string frames = c.cfg.get_string(section + ".frames", "random");
    p.frame_amp = c.cfg.get_double(section + ".frame_amp", 0.1);
    if (p.dt < 0.0) throw ConfigError(section + ".dt must be nonnegative (0 picks half the stability bound)");
    if (steps < 2 || steps > 1000000) throw ConfigError(section + ".steps must lie in [2, 1e6]");
    if (frames != "random" && frames != "solution") throw ConfigError(section + ".frames must be random or solution");
    p.steps = int(steps);
    p.solution_frames = frames == "solution";
    return p;
}

struct Trajectory {
    std::vector<double> t;
    std::vector<AbiState> solution;
    std::vector<TestFieldFrame> frames;
    std::vector<DmhdState> dmhd;
    double E0 = 0.0;
};

inline Trajectory run_trajectory(const TrajectoryParams& p, std::uint64_t seed)
{
    Trajectory tr;
    DmhdState s0{p.h0, p.B0};
    tr.E0 = energy(s0);
    double dt = p.dt > 0.0 ? p.dt : 0.5 * dmhd_max_dt(s0);
    RandomFrameFamily fam(seed, p.frame_amp);
    dmhd_run(s0, dt, p.steps, [&](int, double t, const DmhdState& s) {
        tr.t.push_back(t);
        tr.solution.push_back(dmhd_as_abi(s));
        tr.dmhd.push_back(s);
        tr.frames.push_back(p.solution_frames ? frame_from_dmhd(s, t) : fam.frame(p.grid, t));
    });
    return tr;
}

inline int certify_cmd(Context& c)
{
    TrajectoryParams tp = trajectory_params(c, "certify");
    std::string r_key = c.cfg.get_string("certify.r", "auto");
    double r_fixed = r_key == "auto" ? 0.0 : c.cfg.get_double("certify.r", 0.0);
    double tol_rel = c.cfg.get_double("certify.tol_rel", 1e-3);
    double corrupt = c.cfg.get_double("certify.corrupt_P", 0.0);
    positive(tol_rel, "certify.tol_rel");
    c.write_manifest();

    Trajectory in = run_trajectory(tp, c.seed);
    if (corrupt != 0.0) {
        for (auto& s : in.solution) s.P[0] += ScalarField(s.grid(), corrupt);
    }
    double rr = r0(in.frames);
    double r = r_key == "auto" ? rr : r_fixed;
    EntropyReport rep = dissipative_slack(in.t, in.solution, in.frames, r, {rr});
    std::ofstream csv = c.open("entropy.csv");
    write_entropy_csv(csv, rep);
    const double tol = tol_rel * in.E0;
    csv << "# tol_slack=" << tol << " max_slack=" << rep.max_slack() << '\n';
    if (rep.max_slack() > tol) {
        std::cerr << "certify: slack " << Config::format(rep.max_slack()) << " exceeds tolerance "
                  << Config::format(tol) << '\n';
        return exit_code::check_failed;
    }
    c.say("certify: max slack " + Config::format(rep.max_slack()) + " <= " + Config::format(tol) + ", r0 " +
          Config::format(rr));
    return exit_code::ok;
}

inline int identity_cmd(Context& c)
{
    TrajectoryParams tp = trajectory_params(c, "identity");
    double tol_rel = c.cfg.get_double("identity.tol_rel", 1e-3);
    positive(tol_rel, "identity.tol_rel");
    c.write_manifest();

    Trajectory in = run_trajectory(tp, c.seed);
    std::ofstream csv = c.open("identity.csv");
    csv << "t,dE_dt,q_term,l_term,lhs,rhs,relative_gap\n";
    double worst = 0.0;
    for (std::size_t k = 0; k < in.t.size(); ++k) {
        IdentitySample smp{in.t[k], in.solution[k], dmhd_rhs(in.dmhd[k]).B};
        IdentityTerms r = identity_residual_check(smp, in.frames[k]);
        csv << r.t << ',' << r.dE_dt << ',' << r.q_term << ',' << r.l_term << ',' << r.lhs << ',' << r.rhs << ','
            << r.relative_gap() << '\n';
        worst = std::max(worst, r.relative_gap());
    }
    csv << "# max_relative_gap=" << worst << " tol_rel=" << tol_rel << '\n';
    if (worst > tol_rel) {
        std::cerr << "identity-check: relative gap " << Config::format(worst) << " exceeds " << Config::format(tol_rel)
                  << '\n';
        return exit_code::check_failed;
    }
    c.say("identity-check: max relative gap " + Config::format(worst));
    return exit_code::ok;
}

} // namespace cli_detail

// Exit status: 0 success, 1 I/O failure, 2 configuration or argument error,
// 3 numerical abort, 4 a certification or identity check failed.
inline int run_cli(int argc, char** argv)
{
    CLI::App app{"Augmented Born-Infeld and Darcy MHD solvers, certificates and comparisons"};
    app.require_subcommand(1);
    std::string config_path, out_dir = "out";
    std::uint64_t seed = 1;
    bool quiet = false;
    app.add_option("--config", config_path, "configuration file (key = value, [sections])");
    app.add_option("--out", out_dir, "output directory")->capture_default_str();
    auto* seed_opt = app.add_option("--seed", seed, "seed for random scenarios and test fields");
    app.add_flag("--quiet", quiet, "suppress progress output");
    app.fallthrough();

    using Handler = int (*)(cli_detail::Context&);
    const std::vector<std::pair<std::string, Handler>> commands{
        {"abi-run", cli_detail::abi_run_cmd},        {"dmhd-run", cli_detail::dmhd_run_cmd},
        {"galerkin-run", cli_detail::galerkin_run_cmd}, {"mollify", cli_detail::mollify_cmd},
        {"compare", cli_detail::compare_cmd},        {"certify", cli_detail::certify_cmd},
        {"identity-check", cli_detail::identity_cmd},
    };
    const std::vector<std::string> help{
        "evolve the augmented Born-Infeld system",
        "evolve Darcy MHD and record the energy balance",
        "Faedo-Galerkin approximation with hyperviscosity",
        "mollify rough initial data and check the convex functional",
        "compare ABI with time-changed DMHD and fit rates",
        "certify the dissipative inequality along a DMHD run",
        "check the relative-entropy identity along a DMHD run",
    };
    for (std::size_t i = 0; i < commands.size(); ++i) app.add_subcommand(commands[i].first, help[i]);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? exit_code::ok : exit_code::config;
    }

    cli_detail::Context ctx;
    ctx.quiet = quiet;
    ctx.out = out_dir;
    try {
        if (!config_path.empty()) {
            ctx.cfg = Config::load(config_path);
            auto parent = std::filesystem::path(config_path).parent_path();
            if (!parent.empty()) ctx.config_dir = parent;
        }
        long long cfg_seed = ctx.cfg.get_int("run.seed", 1);
        if (cfg_seed < 0) throw ConfigError("run.seed must be nonnegative");
        ctx.seed = seed_opt->count() ? seed : std::uint64_t(cfg_seed);
        ctx.cfg.set("run.seed", std::to_string(ctx.seed));
        ctx.cfg.get_int("run.seed", 1);
        std::filesystem::create_directories(ctx.out);
        for (const auto& [name, fn] : commands) {
            if (app.got_subcommand(name)) {
                ctx.subcommand = name;
                return fn(ctx);
            }
        }
        return exit_code::config;
    } catch (const InvalidArgument& e) {
        std::cerr << e.what() << '\n';
        return exit_code::config;
    } catch (const NumericalAbort& e) {
        std::cerr << e.what() << '\n';
        return exit_code::numerical;
    } catch (const std::exception& e) {
        std::cerr << e.what() << '\n';
        return exit_code::io;
    }
}

} // namespace abimhd
