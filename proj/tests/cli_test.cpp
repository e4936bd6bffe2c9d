#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

struct Result {
  int code = -1;
  std::string out;
};

// Runs the CLI through the shell; stderr is discarded unless merged by the caller.
Result run(const std::string& args) {
  const std::string cmd = std::string(QCLASS_CLI_PATH) + " " + args + " 2>/dev/null";
  Result r;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (pipe == nullptr) return r;
  char buf[4096];
  std::size_t n = 0;
  while ((n = fread(buf, 1, sizeof buf, pipe)) > 0) r.out.append(buf, n);
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class Cli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = fs::temp_directory_path() / ("qclass_cli_test_" + std::to_string(::getpid()));
    fs::create_directories(dir_);
    std::ofstream cfg(dir_ / "run.ini");
    cfg << "[run]\nseed = 3\nfolds = 3\ncorpus = corpus.tsv\ntaxonomy = corpus.tsv.taxonomy\n"
        << "[preprocess]\nmin_count = 2\nmax_len = 16\n"
        << "[embedding]\ndim = 8\nepochs = 20\n"
        << "[cnn]\nconv_filters = 8, 8\ndense_units = 8\nmax_epochs = 20\n";
    cfg.close();
    run("synth --seed 4 --samples 150 -o " + (dir_ / "corpus.tsv").string());
  }

  static void TearDownTestSuite() { fs::remove_all(dir_); }

  static std::string path(const std::string& name) { return (dir_ / name).string(); }
  static std::string config() { return "-c " + path("run.ini"); }

  static fs::path dir_;
};

fs::path Cli::dir_;

}  // namespace

TEST_F(Cli, UsageErrors) {
  EXPECT_EQ(run("").code, 1);
  EXPECT_EQ(run("frobnicate").code, 1);
  EXPECT_EQ(run("--help").code, 0);
  EXPECT_EQ(run("predict").code, 1);                                  // --model missing
  EXPECT_EQ(run("evaluate --corpus " + path("corpus.tsv")).code, 1);  // no seed
  EXPECT_EQ(run("evaluate " + config() + " --set run.bogus=1").code, 1);
  EXPECT_EQ(run("evaluate -c " + path("missing.ini")).code, 1);
}

TEST_F(Cli, SynthWritesCorpus) {
  ASSERT_TRUE(fs::exists(path("corpus.tsv")));
  std::ifstream in(path("corpus.tsv"));
  std::string line;
  std::size_t lines = 0;
  while (std::getline(in, line)) {
    ++lines;
    EXPECT_EQ(std::count(line.begin(), line.end(), '\t'), 2);
  }
  EXPECT_EQ(lines, 150u);
  EXPECT_TRUE(fs::exists(path("corpus.tsv.taxonomy")));
}

TEST_F(Cli, PrepareReportsCounts) {
  const auto r = run("prepare " + config() + " --vocab-out " + path("vocab.tsv"));
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("questions\t150\n"), std::string::npos);
  EXPECT_NE(r.out.find("vocabulary_size\t"), std::string::npos);
  EXPECT_NE(r.out.find("tokens_NUM\t"), std::string::npos);
  EXPECT_TRUE(fs::exists(path("vocab.tsv")));
}

TEST_F(Cli, DataErrorsExitTwo) {
  {
    std::ofstream bad(path("bad.tsv"));
    bad << "question\tNOT_A_CLASS\tX\n";
  }
  EXPECT_EQ(run("prepare --seed 1 --corpus " + path("bad.tsv")).code, 2);
  EXPECT_EQ(run("prepare --seed 1 --corpus " + path("absent.tsv")).code, 2);
  // The generated six-by-three corpus needs its own taxonomy file.
  EXPECT_EQ(run("prepare --seed 1 --corpus " + path("corpus.tsv")).code, 2);
}

TEST_F(Cli, EvaluateIsByteDeterministic) {
  const auto a = run("evaluate " + config() + " -o " + path("a.tsv"));
  const auto b = run("evaluate " + config() + " -o " + path("b.tsv"));
  ASSERT_EQ(a.code, 0);
  ASSERT_EQ(b.code, 0);
  EXPECT_EQ(slurp(path("a.tsv")), slurp(path("b.tsv")));
  EXPECT_NE(slurp(path("a.tsv")).find("reference\tcoarse\tf1\t0.932500"), std::string::npos);
  EXPECT_NE(a.out.find("reference F1 0.9325"), std::string::npos);
  const auto c = run("evaluate " + config() + " --seed 99 -o " + path("c.tsv"));
  ASSERT_EQ(c.code, 0);
  EXPECT_NE(slurp(path("a.tsv")), slurp(path("c.tsv")));
}

TEST_F(Cli, TrainThenPredict) {
  ASSERT_EQ(run("train " + config() + " -o " + path("model.qcb")).code, 0);
  {
    std::ofstream q(path("questions.txt"));
    std::ifstream in(path("corpus.tsv"));
    std::string line;
    for (int i = 0; i < 5 && std::getline(in, line); ++i) q << line.substr(0, line.find('\t')) << '\n';
  }
  const auto r = run("predict -m " + path("model.qcb") + " " + path("questions.txt"));
  ASSERT_EQ(r.code, 0);
  std::istringstream lines(r.out);
  std::string line;
  int n = 0;
  while (std::getline(lines, line)) {
    ++n;
    EXPECT_EQ(std::count(line.begin(), line.end(), '\t'), 3) << line;
  }
  EXPECT_EQ(n, 5);

  // A flipped byte must be rejected with a data error.
  auto bytes = slurp(path("model.qcb"));
  bytes[bytes.size() / 2] ^= 0x01;
  {
    std::ofstream out(path("corrupt.qcb"), std::ios::binary);
    out << bytes;
  }
  EXPECT_EQ(run("predict -m " + path("corrupt.qcb") + " " + path("questions.txt")).code, 2);
}

TEST_F(Cli, GradcheckPasses) {
  const auto r = run("gradcheck");
  EXPECT_EQ(r.code, 0);
  EXPECT_EQ(r.out.find("FAIL"), std::string::npos);
  EXPECT_NE(r.out.find("conv1d"), std::string::npos);
}
