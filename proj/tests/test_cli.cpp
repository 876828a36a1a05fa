#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include "fixtures.hpp"

namespace fs = std::filesystem;

namespace {

struct Result {
    int code = -1;
    std::string out;
};

Result tbnc(const std::string& args) {
    const std::string cmd = std::string(TBNC_PATH) + " " + args + " 2>&1";
    Result r;
    FILE* p = popen(cmd.c_str(), "r");
    if (!p) return r;
    char buf[4096];
    std::size_t n;
    while ((n = fread(buf, 1, sizeof buf, p)) > 0) r.out.append(buf, n);
    const int status = pclose(p);
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

class Cli : public ::testing::Test {
protected:
    void SetUp() override {
        dir_ = fs::temp_directory_path() / ("tbnc-test-" + std::to_string(::getpid()) + "-" +
                                            ::testing::UnitTest::GetInstance()->current_test_info()->name());
        fs::create_directories(dir_);
    }
    void TearDown() override { fs::remove_all(dir_); }

    std::string path(const std::string& name) const { return (dir_ / name).string(); }
    std::string write(const std::string& name, const std::string& text) const {
        std::ofstream(path(name)) << text;
        return path(name);
    }
    static std::string model(const std::string& name) { return tbn::testing::models_dir() + "/" + name; }

    fs::path dir_;
};

} // namespace

TEST_F(Cli, ValidateAcceptsCorpus) {
    const Result r = tbnc("validate " + model("figure2.tbn"));
    EXPECT_EQ(r.code, 0) << r.out;
    EXPECT_NE(r.out.find("1 transitional"), std::string::npos) << r.out;
}

TEST_F(Cli, ValidateReportsRules) {
    const std::string m = write("bad.tbn", "node x dynamic\n states p q\n cpt 0.5 0.5\n"
                                           "node s static\n states p q\n parents x\n cpt 0.5 0.5 0.5 0.5\nquery s\n");
    const Result r = tbnc("validate " + m);
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.out.find("[static-parent]"), std::string::npos) << r.out;
    EXPECT_NE(r.out.find("x -> s"), std::string::npos) << r.out;
}

TEST_F(Cli, ParseErrorsExitThree) {
    const std::string m = write("broken.tbn", "node a static\n states x y\n cpt 0.5 half\n");
    const Result r = tbnc("validate " + m);
    EXPECT_EQ(r.code, 3);
    EXPECT_NE(r.out.find("line 3"), std::string::npos) << r.out;
    EXPECT_EQ(tbnc("validate " + path("missing.tbn")).code, 3);
}

TEST_F(Cli, UsageErrorsExitTwo) {
    EXPECT_EQ(tbnc("").code, 2);
    EXPECT_EQ(tbnc("frobnicate").code, 2);
    EXPECT_EQ(tbnc("compile " + model("figure2.tbn")).code, 2); // no -o
}

TEST_F(Cli, CompileRunInspect) {
    const Result c = tbnc("compile " + model("figure4.tbn") + " -o " + path("f4.plan"));
    ASSERT_EQ(c.code, 0) << c.out;
    EXPECT_NE(c.out.find("{(b,a),(c,a),(d,a)}"), std::string::npos) << c.out;
    EXPECT_NE(c.out.find("stabilized after       1 iteration"), std::string::npos) << c.out;
    const std::string s = write("s.txt", "obs e 0.9 0.1\nadvance\nobs f 0 1\nquery a\nadvance\n");
    const Result r = tbnc("run " + path("f4.plan") + " " + s + " --target b");
    ASSERT_EQ(r.code, 0) << r.out;
    EXPECT_EQ(std::count(r.out.begin(), r.out.end(), '\n'), 3);
    EXPECT_EQ(r.out.rfind("t=0 b ", 0), 0u) << r.out;
    EXPECT_NE(r.out.find("t=1 a "), std::string::npos) << r.out;
    const Result tsv = tbnc("run " + path("f4.plan") + " " + s + " --format tsv");
    EXPECT_EQ(tsv.code, 0);
    EXPECT_NE(tsv.out.find("0\ta\t"), std::string::npos) << tsv.out;
    const Result i = tbnc("inspect " + path("f4.plan"));
    EXPECT_EQ(i.code, 0);
    EXPECT_NE(i.out.find("psi0 (b,a)"), std::string::npos) << i.out;
    EXPECT_NE(i.out.find("query d"), std::string::npos) << i.out;
}

TEST_F(Cli, InspectShowsEmptyAdvance) {
    ASSERT_EQ(tbnc("compile " + model("fourparents.tbn") + " -o " + path("s.plan")).code, 0);
    const Result i = tbnc("inspect " + path("s.plan"));
    EXPECT_NE(i.out.find("advance\n  (none)"), std::string::npos) << i.out;
}

TEST_F(Cli, RunMatchesOracleCommand) {
    ASSERT_EQ(tbnc("compile " + model("figure2.tbn") + " -o " + path("f2.plan")).code, 0);
    const Result r = tbnc("run " + path("f2.plan") + " " + model("figure2.stream") + " --target e");
    const Result o = tbnc("oracle " + model("figure2.tbn") + " " + model("figure2.stream") + " --target e --t 3");
    ASSERT_EQ(o.code, 0) << o.out;
    EXPECT_NE(r.out.find(o.out), std::string::npos) << r.out << "\n" << o.out;
}

TEST_F(Cli, DiffPassesAndFailsOnTolerance) {
    const Result ok = tbnc("diff " + model("figure2.tbn") + " " + model("figure2.stream"));
    EXPECT_EQ(ok.code, 0) << ok.out;
    EXPECT_NE(ok.out.find("posteriors compared"), std::string::npos);
    // a plan compiled from a different model disagrees with the reference
    const std::string other = tbn::testing::read_text(model("figure2.tbn"));
    std::string changed = other;
    changed.replace(changed.find("cpt 0.6 0.4"), 11, "cpt 0.1 0.9");
    const std::string m2 = write("m2.tbn", changed);
    ASSERT_EQ(tbnc("compile " + m2 + " -o " + path("m2.plan")).code, 0);
    const Result bad = tbnc("diff " + model("figure2.tbn") + " " + model("figure2.stream") + " --plan " + path("m2.plan"));
    EXPECT_EQ(bad.code, 1) << bad.out;
    EXPECT_NE(bad.out.find("mismatch"), std::string::npos);
}

TEST_F(Cli, DiffReportsInfeasibleOracle) {
    std::string stream;
    for (int i = 0; i < 8; ++i) stream += "obs e 0.3 0.7\nadvance\n";
    const std::string s = write("long.txt", stream);
    const Result r = tbnc("diff " + model("figure4.tbn") + " " + s + " --cap 4096");
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.out.find("oracle infeasible"), std::string::npos) << r.out;
}

TEST_F(Cli, CorruptPlanExitsThree) {
    ASSERT_EQ(tbnc("compile " + model("figure2.tbn") + " -o " + path("p.plan")).code, 0);
    std::string text = tbn::testing::read_text(path("p.plan"));
    text[text.find("0.8")] = '9';
    write("p.plan", text);
    const Result r = tbnc("inspect " + path("p.plan"));
    EXPECT_EQ(r.code, 3);
    EXPECT_NE(r.out.find("checksum"), std::string::npos) << r.out;
}

TEST_F(Cli, MalformedStreamExitsThree) {
    ASSERT_EQ(tbnc("compile " + model("figure2.tbn") + " -o " + path("p.plan")).code, 0);
    EXPECT_EQ(tbnc("run " + path("p.plan") + " " + write("a.txt", "obs f 0.5\nadvance\n")).code, 3);
    EXPECT_EQ(tbnc("run " + path("p.plan") + " " + write("b.txt", "observe f 1 0\n")).code, 3);
    EXPECT_EQ(tbnc("run " + path("p.plan") + " " + write("c.txt", "obs d 1 0 0\n")).code, 3);
}

TEST_F(Cli, ImpossibleEvidenceExitsFour) {
    const std::string m = write("stuck.tbn", "node x dynamic transitional-init\n states p q\n parents prev(x)\n"
                                             " cpt 1 0 1 0\n initcpt 1 0\n"
                                             "node y dynamic observable\n states p q\n parents x\n cpt 1 0 0 1\n"
                                             "query x\n");
    ASSERT_EQ(tbnc("compile " + m + " -o " + path("x.plan")).code, 0);
    const Result r = tbnc("run " + path("x.plan") + " " + write("s.txt", "obs y 0 1\nadvance\n"));
    EXPECT_EQ(r.code, 4) << r.out;
}

TEST_F(Cli, CompileCapacityExitsOne) {
    const Result r = tbnc("compile " + model("figure5.tbn") + " -o " + path("c.plan") + " --monolithic --cap 8");
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.out.find("exceeds the cap"), std::string::npos) << r.out;
}

TEST_F(Cli, AdvancesWithoutEvidenceStillReport) {
    ASSERT_EQ(tbnc("compile " + model("figure5.tbn") + " -o " + path("f5.plan")).code, 0);
    const Result r = tbnc("run " + path("f5.plan") + " " + write("s.txt", "advance\nadvance\nadvance\n") + " --target d");
    ASSERT_EQ(r.code, 0) << r.out;
    EXPECT_EQ(std::count(r.out.begin(), r.out.end(), '\n'), 3) << r.out;
    EXPECT_NE(r.out.find("t=2 d "), std::string::npos) << r.out;
}

TEST_F(Cli, DiffRejectsCorruptPlan) {
    ASSERT_EQ(tbnc("compile " + model("figure2.tbn") + " -o " + path("p.plan")).code, 0);
    std::string text = tbn::testing::read_text(path("p.plan"));
    text[text.find("0.8")] = '9';
    write("p.plan", text);
    const Result r = tbnc("diff " + model("figure2.tbn") + " " + model("figure2.stream") + " --plan " + path("p.plan"));
    EXPECT_NE(r.code, 0);
    EXPECT_NE(r.out.find("checksum"), std::string::npos) << r.out;
}
