#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "kamnorm/io.hpp"

using namespace kamnorm;
namespace fs = std::filesystem;

namespace {

struct CmdResult {
    int exit_code;
    std::string output;
};

CmdResult run_cli(const std::string& args)
{
    const std::string out_file = "/tmp/kamnorm_cli_out.txt";
    const std::string cmd = std::string(KAMNORM_CLI_PATH) + " " + args + " > " + out_file +
                            " 2>&1";
    const int status = std::system(cmd.c_str());
    std::ifstream in(out_file);
    std::ostringstream ss;
    ss << in.rdbuf();
    return {WEXITSTATUS(status), ss.str()};
}

std::string problems_dir() { return KAMNORM_PROBLEMS_DIR; }

std::string fresh_dir(const std::string& name)
{
    const std::string dir = "/tmp/kamnorm_test_" + name;
    fs::remove_all(dir);
    return dir;
}

} // namespace

TEST_CASE("cmd_run: pendulum problem completes and writes the artifacts")
{
    const std::string out = fresh_dir("pendulum");
    auto res = run_cli("run --problem " + problems_dir() + "/pendulum.cfg --config " +
                       problems_dir() + "/pendulum_run.cfg --out " + out);
    CHECK(res.exit_code == 0);
    for (const char* f : {"/manifest.txt", "/history.csv", "/omega_star.csv",
                          "/omega_steps.csv", "/clean_flags.csv", "/atlas/params.csv",
                          "/problem.cfg", "/config.cfg"})
        CHECK(fs::exists(out + f));
    LoadedRun lr = load_run(out);
    CHECK(lr.run.completed);
    CHECK(lr.run.history.size() >= 1);
    CHECK(lr.run.history[0].eps_measured <= lr.run.history[0].eps_schedule);
}

TEST_CASE("cmd_run: deterministic reruns produce bit-identical CSV artifacts")
{
    const std::string a = fresh_dir("det_a"), b = fresh_dir("det_b");
    const std::string base = "run --problem " + problems_dir() + "/pendulum.cfg --config " +
                             problems_dir() + "/pendulum_run.cfg --out ";
    CHECK(run_cli(base + a).exit_code == 0);
    CHECK(run_cli(base + b).exit_code == 0);
    for (const char* f : {"/history.csv", "/omega_star.csv", "/omega_steps.csv",
                          "/clean_flags.csv", "/atlas/params.csv"})
        CHECK(read_text_file(a + f) == read_text_file(b + f));
}

TEST_CASE("cmd_run: smallness refusal exits 2 and reports the required gamma")
{
    const std::string prob = "/tmp/kamnorm_too_large.cfg";
    write_text_file(prob, R"([problem]
n = 1
tau = 1.5
alpha = 0.1
s = 0.2
r = 0.5
[grid]
box = 0.8:1.2
shape = 3
[omega]
component = xi1
[perturbation]
term = 1 | 0 | 0.5e-3
)");
    const std::string cfg = "/tmp/kamnorm_gamma.cfg";
    write_text_file(cfg, "[run]\ngamma = 1e-9\n");
    auto res = run_cli("run --problem " + prob + " --config " + cfg + " --out " +
                       fresh_dir("refused"));
    CHECK(res.exit_code == 2);
    CHECK(res.output.find("gamma") != std::string::npos);
}

TEST_CASE("cmd_run: parse errors carry line numbers and exit 1")
{
    const std::string prob = "/tmp/kamnorm_bad.cfg";
    write_text_file(prob, "[problem]\nn = 1\ntau = oops\n");
    auto res = run_cli("run --problem " + prob + " --out " + fresh_dir("bad"));
    CHECK(res.exit_code == 1);
    CHECK(res.output.find("line 3") != std::string::npos);
}

TEST_CASE("cmd_run: resume from a completed step replays the same history")
{
    const std::string full = fresh_dir("resume_full");
    const std::string part = fresh_dir("resume_part");

    // a three-step run of the two-torus problem, then resume it from step 1
    const std::string base = "run --problem " + problems_dir() + "/twotorus.cfg --config " +
                             problems_dir() + "/twotorus_run.cfg --out ";
    auto r1 = run_cli(base + full);
    REQUIRE(r1.exit_code == 0);
    auto r2 = run_cli(base + part);
    REQUIRE(r2.exit_code == 0);
    auto r3 = run_cli(base + part + " --resume-from 1");
    REQUIRE(r3.exit_code == 0);
    CHECK(read_text_file(full + "/history.csv") == read_text_file(part + "/history.csv"));
    CHECK(read_text_file(full + "/omega_star.csv") == read_text_file(part + "/omega_star.csv"));
}

TEST_CASE("cmd_verify: trivial run verifies to zero residuals")
{
    const std::string prob = "/tmp/kamnorm_trivial.cfg";
    write_text_file(prob, R"([problem]
n = 1
tau = 1.5
alpha = 0.1
s = 4.0
r = 0.5
[grid]
box = 0.8:1.2
shape = 3
[omega]
component = xi1
)");
    const std::string out = fresh_dir("trivial");
    auto res = run_cli("run --problem " + prob + " --out " + out);
    REQUIRE(res.exit_code == 0);
    auto ver = run_cli("verify " + out + " --samples 0,1");
    CHECK(ver.exit_code == 0);
    CHECK(ver.output.find("conjugacy sup-residual = 0") != std::string::npos);
    CHECK(fs::exists(out + "/verify_report.txt"));
    CHECK(fs::exists(out + "/verify_conjugacy_0.csv"));

    // omega_star equals omega for the zero perturbation
    LoadedRun lr = load_run(out);
    for (size_t q = 0; q < lr.grid.size(); ++q)
        CHECK(lr.run.omega_star[q][0] == lr.grid.samples[q][0]);
}

TEST_CASE("cmd_verify: missing artifacts are reported by name")
{
    auto res = run_cli("verify /tmp/kamnorm_not_a_run");
    CHECK(res.exit_code == 1);
    CHECK(res.output.find("manifest.txt") != std::string::npos);
}

TEST_CASE("cmd_freq: degree, measure and window subcommands")
{
    auto deg = run_cli("freq degree --map 'xi1;xi2' --box -1:1,-1:1 --target 0.2,0.1");
    CHECK(deg.exit_code == 0);
    CHECK(deg.output.find("degree = 1") != std::string::npos);

    auto deg0 = run_cli("freq degree --map 'xi1^2;xi2' --box -1:1,-1:1 --target 0.1,0");
    CHECK(deg0.exit_code == 0);
    CHECK(deg0.output.find("degree = 0") != std::string::npos);

    auto mea = run_cli("freq measure --omega0 1,1.6180339887 --alpha 0.05 --tau 1.5 "
                       "--lambda0 0.01 --K 50 --out /tmp/kamnorm_measure.csv");
    CHECK(mea.exit_code == 0);
    CHECK(fs::exists("/tmp/kamnorm_measure.csv"));

    auto win = run_cli("freq window --omega0 1,1.6180339887 --nu0 1.41421356237 --mu0 1 "
                       "--alpha 0.02 --tau 1.5 --sigma 1e-4 --K 40");
    CHECK(win.exit_code == 0);
    CHECK(win.output.find("admissible intervals") != std::string::npos);

    auto ell = run_cli("freq elliptic --problem " + problems_dir() +
                       "/elliptic_example.cfg --omega0 1,1.6180339887 --sigma 1e-4 --K 40");
    CHECK(ell.exit_code == 0);
    CHECK(ell.output.find("membership margin") != std::string::npos);

    // hypothesis failure surfaces the failing l with exit code 2
    const std::string badprob = "/tmp/kamnorm_bad_beta.cfg";
    write_text_file(badprob, R"([problem]
n = 2
tau = 1.5
alpha = 0.02
s = 1.0
r = 0.5
[grid]
box = 0.5:1.5, 1.0:2.2
shape = 3, 3
[omega]
component = xi1
component = xi2
[elliptic]
nbar = 1
beta = 0.0
M = 0.1; 0.0
)");
    auto bad = run_cli("freq elliptic --problem " + badprob +
                       " --omega0 1,1.6180339887 --sigma 1e-4 --K 40");
    CHECK(bad.exit_code == 2);
    CHECK(bad.output.find("l = (") != std::string::npos);
}

TEST_CASE("cmd_freq: dilation on the odd-power map")
{
    auto res = run_cli("freq dilate --map 'xi1^3;xi2^3' --box -1:1,-1:1 --omega0 0.1,0.2");
    CHECK(res.exit_code == 0);
    CHECK(res.output.find("residual") != std::string::npos);
}
