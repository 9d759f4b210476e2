#include "doctest.h"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <sys/wait.h>

#include <json.hpp>

namespace fs = std::filesystem;

namespace {

struct Outcome {
    int code = -1;
    std::string err;
    std::string out;
};

std::string slurp(const fs::path& p)
{
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Outcome run(const std::string& args, const fs::path& dir)
{
    const fs::path o = dir / "stdout.txt", e = dir / "stderr.txt";
    const std::string cmd = std::string(CIRCME_CLI_PATH) + " " + args + " >" + o.string() + " 2>" + e.string();
    const int status = std::system(cmd.c_str());
    Outcome r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = slurp(o);
    r.err = slurp(e);
    return r;
}

fs::path fresh(const std::string& name)
{
    const fs::path p = fs::temp_directory_path() / ("circme_cli_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

const std::string kData = std::string(CIRCME_DATA_DIR) + "/synthetic_n120.csv";

} // namespace

TEST_CASE("exit codes and one-line reasons")
{
    const fs::path d = fresh("codes");
    const std::string out = " --out " + d.string();

    auto r = run("", d);
    CHECK(r.code == 1);
    CHECK(r.err.rfind("ERROR usage:", 0) == 0);

    r = run("fit --input " + kData + " --h 0.5 --no-such-flag" + out, d);
    CHECK(r.code == 1);

    r = run("fit --input " + kData + out, d);
    CHECK(r.code == 1);

    r = run("fit --input " + kData + " --h -2" + out, d);
    CHECK(r.code == 1);

    r = run("fit --input " + kData + " --h 0.5 --estimator nope" + out, d);
    CHECK(r.code == 1);

    r = run("select-h --input " + kData + " --selector naive-cv" + out, d);
    CHECK(r.code == 1);
    CHECK(r.err.find("--seed") != std::string::npos);

    r = run("fit --input " + (d / "missing.csv").string() + " --h 0.5" + out, d);
    CHECK(r.code == 2);
    CHECK(r.err.rfind("ERROR data:", 0) == 0);

    {
        std::ofstream bad(d / "bad.csv");
        bad << "theta,w\n0.1,1\n0.2,2\nzz,3\n0.4,4\n0.5,5\n0.6,6\n";
    }
    r = run("fit --input " + (d / "bad.csv").string() + " --h 0.5" + out, d);
    CHECK(r.code == 2);
    CHECK(r.err.find("line 4") != std::string::npos);

    r = run("fit --input " + kData + " --h 0.01 --estimator dk --sigma-u 1.5" + out, d);
    CHECK(r.code == 3);
    CHECK(r.err.rfind("ERROR numeric:", 0) == 0);

    // one line each
    CHECK(std::count(r.err.begin(), r.err.end(), '\n') == 1);

    r = run("--help", d);
    CHECK(r.code == 0);
}

TEST_CASE("fit writes outputs and a manifest, and is reproducible")
{
    const fs::path a = fresh("fit_a"), b = fresh("fit_b");
    const std::string args = "fit --input " + kData + " --estimator dk --reliability 0.8 --selector naive-cv --seed 7";
    auto r = run(args + " --out " + a.string(), a);
    REQUIRE(r.code == 0);
    CHECK(fs::exists(a / "fit.csv"));
    CHECK(fs::exists(a / "bandwidth.csv"));
    const auto m = nlohmann::json::parse(slurp(a / "manifest.json"));
    CHECK(m["command"] == "fit");
    CHECK(m["options"]["seed"] == "7");
    CHECK(m["inputs"][0]["rows_used"] == 120);
    CHECK(m["outputs"].size() == 2);
    CHECK(m.contains("version"));
    CHECK(m["wall_seconds"].get<double>() >= 0.0);
    REQUIRE(run(args + " --out " + b.string(), b).code == 0);
    CHECK(slurp(a / "fit.csv") == slurp(b / "fit.csv"));
    CHECK(slurp(a / "bandwidth.csv") == slurp(b / "bandwidth.csv"));
}

TEST_CASE("config file with flag override")
{
    const fs::path d = fresh("config");
    {
        std::ofstream c(d / "run.cfg");
        c << "# contamination settings\nseed = 5\nreliability = 0.7\nerror = laplace\n";
    }
    const auto r = run("contaminate --input " + kData + " --config " + (d / "run.cfg").string() +
                           " --reliability 0.6 --out " + d.string(),
                       d);
    REQUIRE(r.code == 0);
    const auto m = nlohmann::json::parse(slurp(d / "manifest.json"));
    CHECK(m["options"]["reliability"] == "0.6");
    CHECK(m["options"]["error"] == "laplace");
    CHECK(std::abs(m["contamination"]["achieved_reliability"].get<double>() - 0.6) < 1e-9);
}

TEST_CASE("select-h, sensitivity and simulate")
{
    const fs::path d = fresh("misc");
    auto r = run("select-h --input " + kData + " --selector naive-cv --seed 1 --h-grid 0.05,0.06 --out " + d.string(), d);
    REQUIRE(r.code == 0);
    CHECK(r.err.find("WARN boundary") != std::string::npos);

    const fs::path s = fresh("sens");
    r = run("sensitivity --input " + kData + " --lambdas 0.8,0.9 --estimators naive,dk --h 0.6 --out " + s.string(), s);
    REQUIRE(r.code == 0);
    CHECK(fs::exists(s / "fit_lambda0.9_laplace_DK.csv"));
    CHECK(fs::exists(s / "sensitivity.csv"));

    const fs::path m = fresh("sim");
    r = run("simulate --preset appI-desk --replicates 1 --procedures DKL-O --seed 3 --out " + m.string(), m);
    REQUIRE(r.code == 0);
    const std::string risks = slurp(m / "risks.csv");
    CHECK(std::count(risks.begin(), risks.end(), '\n') == 2);
    r = run("simulate --preset fig9 --seed 3 --out " + m.string(), m);
    CHECK(r.code == 1);
}
