#include "kamnorm/io.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

namespace fs = std::filesystem;

namespace kamnorm {

void write_text_file(const std::string& path, const std::string& content)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << content;
}

std::string read_text_file(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

namespace {

std::string step_name(const char* prefix, int j, const char* ext)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%s_%03d.%s", prefix, j, ext);
    return buf;
}

void write_series_file(const std::string& path, const FTSeries& s)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    s.write(out);
}

FTSeries read_series_file(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + path);
    return FTSeries::read(in);
}

std::string csv_doubles(std::span<const double> v)
{
    std::string out;
    for (size_t i = 0; i < v.size(); ++i) {
        if (i) out += ",";
        out += fmt_double(v[i]);
    }
    return out;
}

} // namespace

void save_run(const std::string& dir, const KamRun& run, const Problem& problem,
              const RunConfig& cfg, const ParamGrid& grid)
{
    fs::create_directories(dir);
    fs::create_directories(dir + "/atlas");
    fs::create_directories(dir + "/state");

    write_text_file(dir + "/problem.cfg", problem.source_text);
    write_text_file(dir + "/config.cfg", config_to_text(cfg));

    {
        std::ostringstream m;
        m << "[state]\n";
        m << "status = " << (run.completed ? "completed" : "partial") << "\n";
        m << "steps = " << run.history.size() << "\n";
        m << "eps0_measured = " << fmt_double(run.eps0_measured) << "\n";
        m << "eps_final_measured = " << fmt_double(run.eps_final_measured) << "\n";
        m << "kcheck = " << run.kcheck << "\n";
        if (!run.abort_reason.empty()) m << "abort_reason = " << run.abort_reason << "\n";
        m << "[schedule_final]\n";
        m << "j = " << run.final_params.j << "\n";
        m << "s = " << fmt_double(run.final_params.s) << "\n";
        m << "rho = " << fmt_double(run.final_params.rho) << "\n";
        m << "r = " << fmt_double(run.final_params.r) << "\n";
        m << "alpha_j = " << fmt_double(run.final_params.alpha_j) << "\n";
        m << "E = " << fmt_double(run.final_params.E) << "\n";
        m << "K = " << run.final_params.K << "\n";
        m << "gamma = " << fmt_double(run.final_params.gamma) << "\n";
        write_text_file(dir + "/manifest.txt", m.str());
    }

    {
        std::ostringstream h;
        h << "j,eps_measured,eps_schedule,rho_j,alpha_j,r_j,E_j,K_j,clean_fraction,"
             "drift_sup,step_shift_sup,c_measured,hom_residual_rel,lie_tail,cap_residual\n";
        for (const auto& rec : run.history) {
            h << rec.j << "," << fmt_double(rec.eps_measured) << ","
              << fmt_double(rec.eps_schedule) << "," << fmt_double(rec.rho) << ","
              << fmt_double(rec.alpha_j) << "," << fmt_double(rec.r) << ","
              << fmt_double(rec.E) << "," << rec.K << ","
              << fmt_double(rec.clean_fraction) << "," << fmt_double(rec.drift_sup) << ","
              << fmt_double(rec.step_shift_sup) << "," << fmt_double(rec.c_measured) << ","
              << fmt_double(rec.hom_residual_rel) << "," << fmt_double(rec.lie_tail) << ","
              << fmt_double(rec.cap_residual) << "\n";
        }
        write_text_file(dir + "/history.csv", h.str());
    }

    {
        std::ostringstream o;
        o << "sample";
        for (int i = 0; i < grid.dim(); ++i) o << ",xi" << i + 1;
        const int n = run.omega_star.empty() ? 0 : static_cast<int>(run.omega_star[0].size());
        for (int i = 0; i < n; ++i) o << ",omega_star" << i + 1;
        for (int i = 0; i < n; ++i) o << ",omega0_" << i + 1;
        o << ",energy,in_pi_star\n";
        for (size_t q = 0; q < grid.size(); ++q) {
            o << q << "," << csv_doubles(grid.samples[q]);
            o << "," << csv_doubles(run.omega_star[q]);
            o << "," << csv_doubles(run.omega0()[q]);
            o << "," << fmt_double(run.energy_star.empty() ? 0.0 : run.energy_star[q]);
            o << "," << int(run.pi_star.empty() ? 0 : run.pi_star[q]) << "\n";
        }
        write_text_file(dir + "/omega_star.csv", o.str());
    }

    {
        std::ostringstream o;
        o << "step,sample,omega_components\n";
        for (size_t j = 0; j < run.omega_by_step.size(); ++j)
            for (size_t q = 0; q < run.omega_by_step[j].size(); ++q)
                o << j << "," << q << "," << csv_doubles(run.omega_by_step[j][q]) << "\n";
        write_text_file(dir + "/omega_steps.csv", o.str());
    }

    {
        std::ostringstream o;
        o << "step,sample,omega_hat_components\n";
        for (size_t j = 0; j < run.omega_hat_by_step.size(); ++j)
            for (size_t q = 0; q < run.omega_hat_by_step[j].size(); ++q)
                o << j << "," << q << "," << csv_doubles(run.omega_hat_by_step[j][q]) << "\n";
        write_text_file(dir + "/omega_hat_steps.csv", o.str());
    }

    {
        std::ostringstream o;
        o << "step,sample,clean\n";
        for (size_t j = 0; j < run.clean_by_step.size(); ++j)
            for (size_t q = 0; q < run.clean_by_step[j].size(); ++q)
                o << j << "," << q << "," << int(run.clean_by_step[j][q]) << "\n";
        write_text_file(dir + "/clean_flags.csv", o.str());
    }

    {
        std::ostringstream o;
        o << "stage,j,s,rho,r,alpha_j,E,eps,eta,K,tau,tau_prime,alpha,gamma\n";
        for (size_t i = 0; i < run.atlas.stages.size(); ++i) {
            const StepParams& sp = run.atlas.stages[i].params;
            o << i << "," << sp.j << "," << fmt_double(sp.s) << "," << fmt_double(sp.rho)
              << "," << fmt_double(sp.r) << "," << fmt_double(sp.alpha_j) << ","
              << fmt_double(sp.E) << "," << fmt_double(sp.eps) << "," << fmt_double(sp.eta)
              << "," << sp.K << "," << fmt_double(sp.tau) << "," << fmt_double(sp.tau_prime)
              << "," << fmt_double(sp.alpha) << "," << fmt_double(sp.gamma) << "\n";
        }
        write_text_file(dir + "/atlas/params.csv", o.str());
        for (size_t i = 0; i < run.atlas.stages.size(); ++i)
            write_series_file(dir + "/atlas/" + step_name("F", static_cast<int>(i), "series"),
                              run.atlas.stages[i].generator);
    }

    const int j_now = static_cast<int>(run.history.size());
    write_series_file(dir + "/state/" + step_name("P", j_now, "series"), run.P_star);
    {
        std::ostringstream o;
        o << "sample,energy\n";
        for (size_t q = 0; q < run.energy_star.size(); ++q)
            o << q << "," << fmt_double(run.energy_star[q]) << "\n";
        write_text_file(dir + "/state/" + step_name("energy", j_now, "csv"), o.str());
    }
}

namespace {

std::vector<std::string> csv_lines(const std::string& text)
{
    std::vector<std::string> lines;
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!line.empty()) lines.push_back(line);
    }
    return lines;
}

std::vector<std::string> csv_fields(const std::string& line)
{
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    out.push_back(cur);
    return out;
}

std::map<std::string, std::string> parse_kv(const std::string& text)
{
    std::map<std::string, std::string> out;
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
        const size_t eq = line.find('=');
        if (eq == std::string::npos) continue;
        std::string key = line.substr(0, eq);
        std::string val = line.substr(eq + 1);
        auto trim = [](std::string& s) {
            size_t a = s.find_first_not_of(" \t\r");
            size_t b = s.find_last_not_of(" \t\r");
            s = a == std::string::npos ? "" : s.substr(a, b - a + 1);
        };
        trim(key);
        trim(val);
        out[key] = val;
    }
    return out;
}

} // namespace

LoadedRun load_run(const std::string& dir)
{
    LoadedRun lr;
    lr.problem = Problem::parse(read_text_file(dir + "/problem.cfg"));
    lr.cfg = config_from_text(read_text_file(dir + "/config.cfg"));
    lr.grid = lr.problem.make_grid();

    auto manifest = parse_kv(read_text_file(dir + "/manifest.txt"));
    lr.run.completed = manifest["status"] == "completed";
    lr.run.eps0_measured = std::stod(manifest["eps0_measured"]);
    lr.run.eps_final_measured = std::stod(manifest["eps_final_measured"]);
    lr.run.kcheck = std::stoll(manifest.count("kcheck") ? manifest["kcheck"] : "0");
    if (manifest.count("abort_reason")) lr.run.abort_reason = manifest["abort_reason"];

    {
        auto lines = csv_lines(read_text_file(dir + "/history.csv"));
        for (size_t i = 1; i < lines.size(); ++i) {
            auto f = csv_fields(lines[i]);
            if (f.size() != 15) throw ParseError("history.csv: bad row", static_cast<int>(i + 1));
            StepRecord rec;
            rec.j = std::stoi(f[0]);
            rec.eps_measured = std::stod(f[1]);
            rec.eps_schedule = std::stod(f[2]);
            rec.rho = std::stod(f[3]);
            rec.alpha_j = std::stod(f[4]);
            rec.r = std::stod(f[5]);
            rec.E = std::stod(f[6]);
            rec.K = std::stoll(f[7]);
            rec.clean_fraction = std::stod(f[8]);
            rec.drift_sup = std::stod(f[9]);
            rec.step_shift_sup = std::stod(f[10]);
            rec.c_measured = std::stod(f[11]);
            rec.hom_residual_rel = std::stod(f[12]);
            rec.lie_tail = std::stod(f[13]);
            rec.cap_residual = std::stod(f[14]);
            lr.run.history.push_back(rec);
        }
    }

    {
        auto lines = csv_lines(read_text_file(dir + "/omega_steps.csv"));
        for (size_t i = 1; i < lines.size(); ++i) {
            auto f = csv_fields(lines[i]);
            const size_t j = std::stoul(f[0]);
            const size_t q = std::stoul(f[1]);
            if (lr.run.omega_by_step.size() <= j) lr.run.omega_by_step.resize(j + 1);
            if (lr.run.omega_by_step[j].size() <= q) lr.run.omega_by_step[j].resize(q + 1);
            std::vector<double> w;
            for (size_t c = 2; c < f.size(); ++c) w.push_back(std::stod(f[c]));
            lr.run.omega_by_step[j][q] = std::move(w);
        }
    }

    {
        auto lines = csv_lines(read_text_file(dir + "/omega_hat_steps.csv"));
        for (size_t i = 1; i < lines.size(); ++i) {
            auto f = csv_fields(lines[i]);
            const size_t j = std::stoul(f[0]);
            const size_t q = std::stoul(f[1]);
            if (lr.run.omega_hat_by_step.size() <= j) lr.run.omega_hat_by_step.resize(j + 1);
            if (lr.run.omega_hat_by_step[j].size() <= q) lr.run.omega_hat_by_step[j].resize(q + 1);
            std::vector<double> w;
            for (size_t c = 2; c < f.size(); ++c) w.push_back(std::stod(f[c]));
            lr.run.omega_hat_by_step[j][q] = std::move(w);
        }
    }

    {
        auto lines = csv_lines(read_text_file(dir + "/clean_flags.csv"));
        for (size_t i = 1; i < lines.size(); ++i) {
            auto f = csv_fields(lines[i]);
            const size_t j = std::stoul(f[0]);
            const size_t q = std::stoul(f[1]);
            if (lr.run.clean_by_step.size() <= j) lr.run.clean_by_step.resize(j + 1);
            if (lr.run.clean_by_step[j].size() <= q) lr.run.clean_by_step[j].resize(q + 1);
            lr.run.clean_by_step[j][q] = static_cast<uint8_t>(std::stoi(f[2]));
        }
    }

    {
        auto lines = csv_lines(read_text_file(dir + "/omega_star.csv"));
        const int d = lr.grid.dim();
        for (size_t i = 1; i < lines.size(); ++i) {
            auto f = csv_fields(lines[i]);
            const size_t q = std::stoul(f[0]);
            (void)q;
            const int n = (static_cast<int>(f.size()) - 3 - d) / 2;
            std::vector<double> ws;
            for (int c = 0; c < n; ++c) ws.push_back(std::stod(f[1 + d + c]));
            lr.run.omega_star.push_back(std::move(ws));
            lr.run.energy_star.push_back(std::stod(f[f.size() - 2]));
            lr.run.pi_star.push_back(static_cast<uint8_t>(std::stoi(f.back())));
        }
    }

    {
        auto lines = csv_lines(read_text_file(dir + "/atlas/params.csv"));
        for (size_t i = 1; i < lines.size(); ++i) {
            auto f = csv_fields(lines[i]);
            AtlasStage stage;
            StepParams sp;
            sp.j = std::stoi(f[1]);
            sp.s = std::stod(f[2]);
            sp.rho = std::stod(f[3]);
            sp.r = std::stod(f[4]);
            sp.alpha_j = std::stod(f[5]);
            sp.E = std::stod(f[6]);
            sp.eps = std::stod(f[7]);
            sp.eta = std::stod(f[8]);
            sp.K = std::stoll(f[9]);
            sp.tau = std::stod(f[10]);
            sp.tau_prime = std::stod(f[11]);
            sp.alpha = std::stod(f[12]);
            sp.gamma = std::stod(f[13]);
            stage.params = sp;
            stage.generator = read_series_file(dir + "/atlas/" +
                                               step_name("F", static_cast<int>(i - 1), "series"));
            lr.run.atlas.stages.push_back(std::move(stage));
        }
    }

    const int j_now = static_cast<int>(lr.run.history.size());
    lr.run.P_star = read_series_file(dir + "/state/" + step_name("P", j_now, "series"));

    // final schedule params rebuilt by replay
    if (!lr.run.atlas.stages.empty()) {
        StepParams sp = lr.run.atlas.stages.front().params;
        for (int a = 0; a < j_now; ++a) sp = advance_schedule(sp, lr.cfg.c_growth);
        lr.run.final_params = sp;
    }
    return lr;
}

Hamiltonian load_step_state(const std::string& dir, const LoadedRun& lr, int j)
{
    if (j < 0 || j > static_cast<int>(lr.run.history.size()))
        throw std::invalid_argument("load_step_state: step " + std::to_string(j) +
                                    " not persisted");
    Hamiltonian H;
    H.P = [&] {
        std::ifstream in(dir + "/state/" + step_name("P", j, "series"), std::ios::binary);
        if (!in) throw std::runtime_error("missing per-step state for step " + std::to_string(j));
        return FTSeries::read(in);
    }();
    H.omega = lr.run.omega_by_step.at(j);
    auto kv = csv_lines(read_text_file(dir + "/state/" + step_name("energy", j, "csv")));
    for (size_t i = 1; i < kv.size(); ++i) H.energy.push_back(std::stod(csv_fields(kv[i])[1]));
    return H;
}

} // namespace kamnorm
