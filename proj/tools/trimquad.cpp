// trimquad command line: studies, rules, group reports, problem validation.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "trimquad/oracle.hpp"
#include "trimquad/trimquad.hpp"

namespace {

using namespace trimquad;

ProblemFile load_any(const std::string& what) {
    if (std::filesystem::exists(what)) return load_problem(what);
    return builtin_problem(what);
}

int cmd_run(const std::string& problem, const std::string& out, const std::vector<int>& degrees,
            const std::vector<int>& meshes, const std::vector<std::string>& methods, bool timing) {
    auto pf = load_any(problem);
    if (!degrees.empty()) pf.study.degrees = degrees;
    if (!meshes.empty()) pf.study.meshes = meshes;
    if (!methods.empty()) {
        pf.study.methods.clear();
        for (const auto& m : methods) pf.study.methods.push_back(detail::parse_method(m));
    }
    StudyOptions opt;
    opt.workers = workers_from_env();
    opt.timing = timing;
    const auto rows = run_study(pf, opt);
    if (out.empty() || out == "-") {
        write_csv(std::cout, pf, rows, timing);
    } else {
        std::ofstream os(out, std::ios::binary);
        if (!os) throw ValidationError("cannot write '" + out + "'");
        write_csv(os, pf, rows, timing);
    }
    int failed = 0;
    for (const auto& r : rows)
        if (!r.error.empty()) {
            ++failed;
            std::cerr << r.problem << " p=" << r.p << " mesh=" << r.mesh << ' ' << to_string(r.method) << ": " << r.error
                      << '\n';
        }
    return failed ? 3 : 0;
}

int cmd_rule(const std::vector<double>& knots, int degree, const std::string& element) {
    if (element != "plane" && element != "kl_plate")
        throw ValidationError("element must be plane or kl_plate, got '" + element + "'");
    const SplineSpace1D solution(knots, degree);
    const auto type = element == "plane" ? ElementType::plane : ElementType::kl_plate;
    const auto rule = solve_patchwise_1d(target_space(solution, type));
    for (std::size_t i = 0; i < rule.size(); ++i)
        std::printf("%.17g %.17g\n", rule.points[i], rule.weights[i]);
    return 0;
}

int cmd_groups(const std::string& problem, int p, const std::vector<int>& meshes) {
    const auto pf = load_any(problem);
    const auto rows = report_groups(pf, p, meshes.empty() ? pf.study.meshes : meshes);
    std::printf("mesh,n_ele_pw,n_ele_tra,n_ele_t,n_ele_ia,frac_pw,frac_tra,frac_t,frac_ia,tangencies\n");
    for (const auto& g : rows)
        std::printf("%d,%d,%d,%d,%d,%.17g,%.17g,%.17g,%.17g,%d\n", g.mesh, g.counts.pw, g.counts.tra, g.counts.t,
                    g.counts.ia, g.pw, g.tra, g.t, g.ia, g.tangencies);
    return 0;
}

int cmd_validate(const std::string& problem) {
    const auto pf = load_any(problem);
    const auto& su = pf.patch.space_u();
    const auto& sv = pf.patch.space_v();
    const TrimmedDomain dom(Rect{su.lower(), su.upper(), sv.lower(), sv.upper()}, pf.loops);
    const double area = oracle::greens_area(dom);
    std::printf("%s: ok\n", pf.name.c_str());
    std::printf("  geometry degrees %d x %d, %d x %d control points\n", su.degree(), sv.degree(), su.dimension(),
                sv.dimension());
    std::printf("  %d trimming loop(s), valid parametric area %.17g of %.17g\n", dom.num_loops(), area,
                dom.bounds().area());
    std::printf("  %s, %zu dirichlet, %zu neumann, q_z %.17g\n", to_string(pf.element_type), pf.dirichlet.size(),
                pf.neumann.size(), pf.q_z);
    return 0;
}

int cmd_export(const std::string& name, const std::string& out) {
    const auto j = problem_to_json(builtin_problem(name));
    std::ofstream os(out, std::ios::binary);
    if (!os) throw ValidationError("cannot write '" + out + "'");
    os << j.dump(2) << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Patch-wise quadrature for trimmed NURBS patches"};
    app.require_subcommand(1);

    std::string problem, out;
    std::vector<int> degrees, meshes;
    std::vector<std::string> methods;
    bool timing = false;
    auto* run = app.add_subcommand("run", "Run a convergence / count study and write CSV");
    run->add_option("problem", problem, "Problem file or built-in name")->required();
    run->add_option("--out", out, "Output CSV (default stdout)");
    run->add_option("--degrees", degrees, "Override study degrees");
    run->add_option("--meshes", meshes, "Override study meshes");
    run->add_option("--methods", methods, "Override study methods (gauss, pw_trimm)");
    run->add_flag("--timing", timing, "Fill the wall-time columns");

    std::vector<double> knots;
    int degree = 2;
    std::string element = "plane";
    auto* rule = app.add_subcommand("rule", "Print the patch-wise rule of a solution space");
    rule->add_option("--knots", knots, "Open knot vector of the solution space")->required();
    rule->add_option("--degree", degree, "Solution degree")->required();
    rule->add_option("--element", element, "plane or kl_plate");

    int gp = 2;
    auto* groups = app.add_subcommand("groups", "Element group fractions per mesh");
    groups->add_option("problem", problem, "Problem file or built-in name")->required();
    groups->add_option("--p", gp, "Degree");
    groups->add_option("--meshes", meshes, "Meshes (default: study meshes)");

    auto* validate = app.add_subcommand("validate", "Check a problem file");
    validate->add_option("problem", problem, "Problem file or built-in name")->required();

    std::string name;
    auto* exp = app.add_subcommand("export", "Write a built-in problem as a problem file");
    exp->add_option("name", name, "Built-in name")->required();
    exp->add_option("--out", out, "Output path")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (*run) return cmd_run(problem, out, degrees, meshes, methods, timing);
        if (*rule) return cmd_rule(knots, degree, element);
        if (*groups) return cmd_groups(problem, gp, meshes);
        if (*validate) return cmd_validate(problem);
        if (*exp) return cmd_export(name, out);
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const NumericalError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 3;
    }
    return 0;
}
