#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <json.hpp>
#include <zlib.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

int run_cli(const std::string& args) {
    std::string cmd = std::string(CONSOLIDA_CLI_PATH) + " " + args + " >cli_stdout.txt 2>cli_stderr.txt";
    int rc = std::system(cmd.c_str());
    return WEXITSTATUS(rc);
}

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::uint32_t crc_of(const fs::path& path) {
    std::string data = slurp(path);
    return static_cast<std::uint32_t>(
        crc32(crc32(0L, nullptr, 0), reinterpret_cast<const Bytef*>(data.data()),
              static_cast<uInt>(data.size())));
}

void write_config(const fs::path& path, const json& cfg) {
    std::ofstream out(path);
    out << cfg.dump(2);
}

json tiny_forward_config() {
    return json{
        {"mode", "forward"},
        {"case", 1},
        {"soil", {{"C_v", 0.05}}},
        {"arch", {{"hidden_layers", 1}, {"neurons_per_layer", 8}}},
        {"grid", {{"n_x", 7}, {"n_y", 7}, {"n_z", 7}, {"n_t", 3}, {"t_max", 1.0}}},
        {"n_u", 300},
        {"n_f_interior", 400},
        {"collocation_includes_condition_grid", false},
        {"fdm_steps", 400},
        {"schedule", json::array({{{"kind", "lbfgs"}, {"epochs", 25}, {"lr", 1.0}}})},
        {"seed", 3},
    };
}

}  // namespace

TEST_CASE("selfcheck exits zero") {
    CHECK(run_cli("selfcheck") == 0);
}

TEST_CASE("config validation failures exit 2 with field paths") {
    fs::create_directories("cli_work");

    write_config("cli_work/bad1.json", json{{"soil", {{"p0", 1.0}}}});
    CHECK(run_cli("run --config cli_work/bad1.json --out cli_work/bad1") == 2);
    std::string err = slurp("cli_stderr.txt");
    CHECK(err.find("soil.C_v") != std::string::npos);

    write_config("cli_work/bad2.json", json{{"not_a_key", 1}});
    CHECK(run_cli("run --config cli_work/bad2.json --out cli_work/bad2") == 2);
    CHECK(slurp("cli_stderr.txt").find("not_a_key") != std::string::npos);

    json bad3 = tiny_forward_config();
    bad3["soil"]["C_v"] = -0.5;
    write_config("cli_work/bad3.json", bad3);
    CHECK(run_cli("run --config cli_work/bad3.json --out cli_work/bad3") == 2);
    CHECK(slurp("cli_stderr.txt").find("soil.C_v") != std::string::npos);

    CHECK(run_cli("run --override case=9 --out cli_work/bad4") == 2);
    CHECK(slurp("cli_stderr.txt").find("case") != std::string::npos);
}

TEST_CASE("fdm mode writes fields, report and a complete manifest") {
    fs::remove_all("cli_fdm");
    int rc = run_cli("fdm --out cli_fdm --override grid.n_x=9 --override grid.n_y=9 "
                     "--override grid.n_z=9 --override fdm_steps=600 --override case=4");
    CHECK(rc == 0);
    CHECK(fs::exists("cli_fdm/report.json"));
    CHECK(fs::exists("cli_fdm/manifest.json"));

    json manifest = json::parse(slurp("cli_fdm/manifest.json"));
    CHECK(manifest["files"].size() >= 4);  // 3 fields + report
    for (const json& entry : manifest["files"]) {
        fs::path p = fs::path("cli_fdm") / entry["path"].get<std::string>();
        CHECK(fs::exists(p));
        CHECK(fs::file_size(p) == entry["bytes"].get<std::uintmax_t>());
        CHECK(crc_of(p) == entry["crc32"].get<std::uint32_t>());
    }

    json report = json::parse(slurp("cli_fdm/report.json"));
    CHECK(report["stability"]["pass"].get<bool>());
    CHECK(report["slices"].size() == 3);
}

TEST_CASE("unstable fdm configuration is refused at runtime") {
    int rc = run_cli("fdm --out cli_unstable --override grid.n_x=21 --override grid.n_y=21 "
                     "--override grid.n_z=21 --override fdm_steps=5");
    CHECK(rc == 1);
    CHECK(slurp("cli_stderr.txt").find("runtime") != std::string::npos);
}

TEST_CASE("forward smoke run produces the advertised artifacts") {
    fs::create_directories("cli_work");
    write_config("cli_work/fwd.json", tiny_forward_config());
    fs::remove_all("cli_fwd");
    int rc = run_cli("run --config cli_work/fwd.json --out cli_fwd");
    CHECK(rc == 0);
    for (const char* rel : {"manifest.json", "trace.jsonl", "checkpoint.tzpn", "report.json",
                            "tables/metrics.csv", "fields/pinn_t0p2.csv", "fields/fdm_t0p8.csv"})
        CHECK(fs::exists(fs::path("cli_fwd") / rel));

    // trace has one JSON line per epoch
    std::ifstream trace("cli_fwd/trace.jsonl");
    int lines = 0;
    for (std::string line; std::getline(trace, line);)
        if (!line.empty()) {
            json j = json::parse(line);
            CHECK(j.contains("loss"));
            ++lines;
        }
    CHECK(lines >= 1);
    CHECK(lines <= 25);

    json report = json::parse(slurp("cli_fwd/report.json"));
    CHECK(report["mode"] == "forward");
    CHECK(report["comparison"].size() == 3);
}

TEST_CASE("identical seeded runs produce identical metric CSVs") {
    fs::create_directories("cli_work");
    write_config("cli_work/rep.json", tiny_forward_config());
    fs::remove_all("cli_rep_a");
    fs::remove_all("cli_rep_b");
    CHECK(run_cli("run --config cli_work/rep.json --out cli_rep_a") == 0);
    CHECK(run_cli("run --config cli_work/rep.json --out cli_rep_b") == 0);
    CHECK(slurp("cli_rep_a/tables/metrics.csv") == slurp("cli_rep_b/tables/metrics.csv"));
    CHECK(slurp("cli_rep_a/checkpoint.tzpn") == slurp("cli_rep_b/checkpoint.tzpn"));
    CHECK(slurp("cli_rep_a/trace.jsonl") == slurp("cli_rep_b/trace.jsonl"));
}

TEST_CASE("compare mode against the checkpoint's own source is near-exact on values") {
    // reuse the trained checkpoint from a fresh tiny run, then compare twice
    fs::create_directories("cli_work");
    write_config("cli_work/cmp.json", tiny_forward_config());
    fs::remove_all("cli_cmp_run");
    REQUIRE(run_cli("run --config cli_work/cmp.json --out cli_cmp_run") == 0);

    json cmp = tiny_forward_config();
    cmp["checkpoint"] = "cli_cmp_run/checkpoint.tzpn";
    cmp["reference"] = "series";
    write_config("cli_work/cmp2.json", cmp);
    fs::remove_all("cli_cmp_out");
    CHECK(run_cli("compare --config cli_work/cmp2.json --out cli_cmp_out") == 0);
    json report = json::parse(slurp("cli_cmp_out/report.json"));
    CHECK(report["reference_source"] == "series");
    CHECK(report["comparison"].size() == 3);
    CHECK(fs::exists("cli_cmp_out/tables/comparison.csv"));
}

TEST_CASE("settle mode writes the settlement table") {
    fs::remove_all("cli_settle");
    int rc = run_cli("settle --out cli_settle --override grid.n_x=11 --override grid.n_y=11 "
                     "--override grid.n_z=11 --override fdm_steps=2000");
    CHECK(rc == 0);
    CHECK(fs::exists("cli_settle/tables/settlement_fdm.csv"));
    std::ifstream in("cli_settle/tables/settlement_fdm.csv");
    std::string header;
    std::getline(in, header);
    CHECK(header == "t,S_t,U");
    json report = json::parse(slurp("cli_settle/report.json"));
    double u_end = report["degree_at_end"].get<double>();
    CHECK(u_end > 0.0);
    CHECK(u_end <= 1.0);
}
