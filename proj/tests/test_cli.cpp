/*
   Copyright 2026 The cellmix authors

   Licensed under the Apache License, Version 2.0 (the "License");
   you may not use this file except in compliance with the License.
   You may obtain a copy of the License at

       http://www.apache.org/licenses/LICENSE-2.0

   Unless required by applicable law or agreed to in writing, software
   distributed under the License is distributed on an "AS IS" BASIS,
   WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
   See the License for the specific language governing permissions and
   limitations under the License.
*/


#include <doctest.h>

#include <array>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include "cellmix/csv.hpp"

namespace fs = std::filesystem;
using namespace cellmix;

namespace {

struct Run {
    int code = -1;
    std::string out;
};

// Runs the binary through the shell, capturing stdout (and stderr if asked).
Run run(const std::string& args, bool merge_stderr = false)
{
    std::string cmd = std::string(CELLMIX_BINARY) + " " + args + (merge_stderr ? " 2>&1" : " 2>/dev/null");
    Run r;
    FILE* p = popen(cmd.c_str(), "r");
    REQUIRE(p != nullptr);
    std::array<char, 4096> buf{};
    std::size_t k;
    while ((k = std::fread(buf.data(), 1, buf.size(), p)) > 0) r.out.append(buf.data(), k);
    const int status = pclose(p);
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

std::string slurp(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

struct TempDir {
    fs::path path;
    TempDir()
    {
        path = fs::temp_directory_path() / ("cellmix_cli_" + std::to_string(::getpid()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

} // namespace

TEST_SUITE("cli") {

TEST_CASE("zero-velocity field")
{
    const auto r = run("field --eps 0.5 --amp 0 --kappa 0.01 --grid 16 --out -");
    CHECK(r.code == 0);
    std::istringstream in(r.out);
    const auto t = read_csv(in);
    CHECK(t.rows.size() == 256);
    const auto c1 = t.column("u1"), c2 = t.column("u2");
    for (const auto& row : t.rows) {
        CHECK(parse_double(row[c1]) == 0.0);
        CHECK(parse_double(row[c2]) == 0.0);
    }
    bool has_eps = false;
    for (const auto& c : t.comments) has_eps = has_eps || c.find("eps") != std::string::npos;
    CHECK(has_eps);
}

TEST_CASE("usage and validation errors exit 1")
{
    const auto r = run("field --eps 0.5 --bogus 3", true);
    CHECK(r.code == 1);
    CHECK(r.out.find("field") != std::string::npos);
    CHECK(r.out.find("--eps") != std::string::npos);
    CHECK(run("").code == 1);
    CHECK(run("field --eps -1 --out -").code == 1);
    CHECK(run("spectral --eps 0.25 --amp 64 --kappa 0.01 --n 64 --measure tdiss --out -").code == 2);
    CHECK(run("--help").code == 0);
}

TEST_CASE("same seed gives byte-identical files")
{
    TempDir tmp;
    const std::string base = "couple --eps 0.5 --amp 4 --kappa 0.04 --samples 30 --seed 7 --jobs 1 --out ";
    const auto a = tmp.path / "a.csv", b = tmp.path / "b.csv", c = tmp.path / "c.csv";
    REQUIRE(run(base + a.string()).code == 0);
    REQUIRE(run(base + b.string()).code == 0);
    const std::string ca = slurp(a);
    CHECK(!ca.empty());
    CHECK(ca == slurp(b));
    REQUIRE(run("couple --eps 0.5 --amp 4 --kappa 0.04 --samples 30 --seed 8 --jobs 1 --out " + c.string()).code == 0);
    CHECK(ca != slurp(c));

    const std::string sim = "simulate --eps 0.5 --amp 4 --kappa 0.04 --t-max 0.2 --samples 3 --seed 7 --out ";
    REQUIRE(run(sim + a.string()).code == 0);
    REQUIRE(run(sim + b.string()).code == 0);
    CHECK(slurp(a) == slurp(b));
}

TEST_CASE("sweep and report")
{
    TempDir tmp;
    const auto spec = tmp.path / "s.toml";
    std::ofstream(spec) << "estimator = \"bound\"\neps = [0.0625]\namp = [4.0, 8.0, 16.0]\nkappa = [0.001]\n";
    const auto out = tmp.path / "r.csv";
    REQUIRE(run("sweep --spec " + spec.string() + " --out " + out.string()).code == 0);
    const auto rep = run("report --in " + out.string() + " --fit --svg " + (tmp.path / "plots").string());
    CHECK(rep.code == 0);
    CHECK(rep.out.find("amp") != std::string::npos);
    std::size_t svgs = 0;
    for (const auto& e : fs::directory_iterator(tmp.path / "plots")) svgs += e.path().extension() == ".svg";
    CHECK(svgs == 1);
}

} // TEST_SUITE
