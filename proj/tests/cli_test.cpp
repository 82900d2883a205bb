#include <sstream>

#include "helpers.hpp"
#include "langsub/cli.hpp"

using namespace langsub;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::vector<std::string> csv_lines(const fs::path& p) {
  std::vector<std::string> lines;
  std::istringstream in(bytes::read_text(p));
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line[0] != '#') lines.push_back(line);
  }
  return lines;
}

std::vector<std::string> listing(const fs::path& dir) {
  std::vector<std::string> names;
  for (const auto& e : fs::directory_iterator(dir)) names.push_back(e.path().filename().string());
  std::ranges::sort(names);
  return names;
}

void write_records(const fs::path& p, const std::vector<int>& correct, int per_lang) {
  static const char* langs[] = {"en", "es", "fr", "de", "zh", "jp", "ru", "th", "te", "bn", "sw"};
  std::ostringstream s;
  s << "id,input_lang,correct,reasoning_lang,response_lang\n";
  for (std::size_t l = 0; l < correct.size(); ++l) {
    for (int i = 0; i < per_lang; ++i) {
      s << langs[l] << i << ',' << langs[l] << ',' << (i < correct[l] ? 1 : 0) << ',' << langs[l] << ','
        << (i % 2 ? langs[l] : "en") << '\n';
    }
  }
  bytes::write_text(p, s.str());
}

}  // namespace

TEST(Cli, SynthThenProbeReportsTinyResiduals) {
  const auto dir = testing_helpers::scratch_dir();
  const auto d = dir.string();
  ASSERT_EQ(run({"synth", "--out", d, "--dim", "12", "--langs", "en,fr,zh,sw", "--layers", "3-5", "--seed", "7"}).code, 0);
  const auto r = run({"probe", "--input", d + "/synth.axd", "--out", d + "/probe"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto lines = csv_lines(dir / "probe" / "probe_summary.csv");
  ASSERT_EQ(lines.size(), 4u);
  for (std::size_t i = 1; i < lines.size(); ++i) {
    std::istringstream row(lines[i]);
    std::string layer, rank, residual;
    std::getline(row, layer, ',');
    std::getline(row, rank, ',');
    std::getline(row, residual, ',');
    EXPECT_EQ(rank, "3");
    EXPECT_LE(std::stod(residual), 1e-6) << lines[i];
  }
  EXPECT_TRUE(fs::exists(dir / "probe" / "layer4.axdec"));
}

TEST(Cli, RankTooLargeIsUsageErrorWithoutOutputs) {
  const auto dir = testing_helpers::scratch_dir();
  const auto d = dir.string();
  ASSERT_EQ(run({"synth", "--out", d, "--dim", "8", "--langs", "en,fr,zh"}).code, 0);
  const auto r = run({"probe", "--input", d + "/synth.axd", "--out", d + "/probe", "--rank", "3"});
  EXPECT_EQ(r.code, cli::kUsage);
  EXPECT_NE(r.err.find("rank"), std::string::npos);
  EXPECT_FALSE(fs::exists(dir / "probe"));
}

TEST(Cli, ProbeRerunIsByteIdentical) {
  const auto dir = testing_helpers::scratch_dir();
  const auto d = dir.string();
  for (const char* sub : {"a", "b"}) {
    const auto out = d + "/" + sub;
    ASSERT_EQ(run({"synth", "--out", out, "--dim", "10", "--langs", "en,fr,zh,sw", "--noise", "0.05", "--per-lang",
                   "5", "--seed", "3", "--layer-count", "2"})
                  .code,
              0);
    ASSERT_EQ(run({"probe", "--input", out + "/synth.axd", "--out", out + "/probe", "--rank", "2"}).code, 0);
  }
  for (const auto* f : {"synth.axd", "synth.manifest.json", "synth.planted.axdp", "probe/layer0.axdec",
                        "probe/layer1.axdec", "probe/probe_summary.csv"}) {
    EXPECT_EQ(bytes::read_file(dir / "a" / f), bytes::read_file(dir / "b" / f)) << f;
  }
}

TEST(Cli, PlanFromProbeOutputs) {
  const auto dir = testing_helpers::scratch_dir();
  const auto d = dir.string();
  ASSERT_EQ(run({"synth", "--out", d, "--dim", "8", "--langs", "en,fr,zh", "--layers", "16-47"}).code, 0);
  ASSERT_EQ(run({"probe", "--input", d + "/synth.axd", "--out", d + "/probe"}).code, 0);
  const auto r = run({"plan", "--input", d + "/probe", "--model", "R1-Distill-Qwen-14B", "--lambda-mid", "0.2",
                      "--lambda-high", "-0.2", "--out", d});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto plan = load_plan(dir / "plan.plan.json");
  ASSERT_EQ(plan.entries.size(), 32u);
  EXPECT_EQ(plan.entries.front().layer, 16u);
  EXPECT_EQ(plan.entries.back().layer, 47u);
  EXPECT_EQ(plan.find(33)->lambda, 0.2);
  EXPECT_EQ(plan.find(34)->lambda, -0.2);
  EXPECT_EQ(load_bases(plan, dir / "probe").size(), 32u);
  EXPECT_EQ(r.out.find("identity"), std::string::npos);

  const auto id = run({"plan", "--input", d + "/probe", "--model", "R1-Distill-Qwen-14B", "--out", d, "--run-id", "id"});
  EXPECT_EQ(id.code, 0);
  EXPECT_NE(id.out.find("identity"), std::string::npos);
}

TEST(Cli, PlanValidation) {
  const auto dir = testing_helpers::scratch_dir();
  const auto d = dir.string();
  EXPECT_EQ(run({"plan", "--model", "QwQ-32B", "--lambda-mid", "0.5", "--out", d}).code, cli::kUsage);
  EXPECT_EQ(run({"plan", "--model", "NoSuchModel", "--out", d}).code, cli::kUsage);
  // no probe outputs for the planned layers
  EXPECT_EQ(run({"plan", "--model", "QwQ-32B", "--lambda-mid", "0.1", "--out", d}).code, cli::kValidation);
  EXPECT_TRUE(listing(dir).empty());
  EXPECT_EQ(run({"plan", "--model", "QwQ-32B", "--lambda-mid", "0.5", "--override-grid", "--input", d, "--out", d})
                .code,
            cli::kValidation);
}

TEST(Cli, MetricsTableFromRecords) {
  const auto dir = testing_helpers::scratch_dir();
  write_records(dir / "base.csv", {231, 207, 197, 193, 207, 181, 203, 198, 92, 169, 42}, 250);
  const auto r = run({"metrics", "--records", (dir / "base.csv").string(), "--out", (dir / "out").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto lines = csv_lines(dir / "out" / "metrics.table.csv");
  ASSERT_EQ(lines.size(), 2u);
  EXPECT_NE(lines[1].find(",69.82,100.00,54.55,"), std::string::npos) << lines[1];
  EXPECT_FALSE(fs::exists(dir / "out" / "metrics.curve.csv"));
}

TEST(Cli, MetricsEmptyFileFailsWithoutOutputs) {
  const auto dir = testing_helpers::scratch_dir();
  bytes::write_text(dir / "empty.csv", "");
  const auto r = run({"metrics", "--records", (dir / "empty.csv").string(), "--out", (dir / "out").string()});
  EXPECT_EQ(r.code, cli::kValidation);
  EXPECT_FALSE(fs::exists(dir / "out"));
}

TEST(Cli, MetricsTwoTaggedSetsGiveCurve) {
  const auto dir = testing_helpers::scratch_dir();
  write_records(dir / "l0.csv", {8, 6}, 10);
  write_records(dir / "l2.csv", {9, 7}, 10);
  const auto r = run({"metrics", "--records", (dir / "l2.csv").string(), "--records", (dir / "l0.csv").string(),
                      "--tags", "0.2,0", "--out", (dir / "out").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto parsed = parse_curve_csv(bytes::read_text(dir / "out" / "metrics.curve.csv"));
  ASSERT_EQ(parsed.curve.points.size(), 2u);
  EXPECT_EQ(parsed.curve.points[0].x, 0.0);
  EXPECT_EQ(parsed.curve.points[1].x, 0.2);
  EXPECT_NEAR(parsed.curve.points[1].metrics.accuracy, 80.0, 1e-12);
  EXPECT_NEAR(parsed.baseline.accuracy, 70.0, 1e-12);
}

TEST(Cli, VizScatterFromPlantedDump) {
  const auto dir = testing_helpers::scratch_dir();
  const auto d = dir.string();
  ASSERT_EQ(run({"synth", "--out", d, "--dim", "16", "--langs", "en,es,zh,sw", "--per-lang", "10", "--noise", "0.01",
                 "--zero-row", "en"})
                .code,
            0);
  for (const char* id : {"a", "b"}) {
    const auto r = run({"viz", "--input", d + "/synth.axd", "--out", d, "--run-id", id, "--anchor", "en"});
    ASSERT_EQ(r.code, 0) << r.err;
  }
  EXPECT_EQ(bytes::read_file(dir / "a.scatter.svg"), bytes::read_file(dir / "b.scatter.svg"));
  EXPECT_EQ(bytes::read_file(dir / "a.scatter.csv"), bytes::read_file(dir / "b.scatter.csv"));
  const auto spec = parse_scatter_csv(bytes::read_text(dir / "a.scatter.csv"));
  EXPECT_EQ(spec.points.size(), 80u);
  EXPECT_EQ(csv_lines(dir / "a.scatter.csv").size(), 81u);
  EXPECT_LT(centroid_shift(scatter_centroids(spec, "pre"), scatter_centroids(spec, "post"), "en"), 1.0);
}

TEST(Cli, VizRerendersCurveCsv) {
  const auto dir = testing_helpers::scratch_dir();
  SweepCurve c{"lambda", {{0.0, {60, 90, 95}}, {0.2, {65, 85, 94}}}};
  const auto art = emit_curves(c, {60, 90, 95}, "r");
  bytes::write_text(dir / "in.csv", art.csv);
  const auto r = run({"viz", "--curve", (dir / "in.csv").string(), "--out", dir.string(), "--run-id", "r"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(bytes::read_text(dir / "r.curves.svg"), art.svg);
  EXPECT_EQ(bytes::read_text(dir / "r.curves.csv"), art.csv);
}

TEST(Cli, SweepWithoutDumpEmitsPlans) {
  const auto dir = testing_helpers::scratch_dir();
  const auto r = run({"sweep", "--model", "Qwen-2.5-Instruct-7B", "--grid", "0:0.1:0.4", "--out", dir.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto index = csv_lines(dir / "sweep.index.csv");
  ASSERT_EQ(index.size(), 6u);
  EXPECT_EQ(index[3], "0.20000000000000001,sweep.point2.plan.json");
  const auto plan = load_plan(dir / "sweep.point2.plan.json");
  EXPECT_EQ(plan.entries.size(), 10u);
  EXPECT_EQ(plan.entries[0].lambda, 0.2);
}

TEST(Cli, SweepOverDumpIsMonotoneInAccuracy) {
  const auto dir = testing_helpers::scratch_dir();
  const auto d = dir.string();
  ASSERT_EQ(run({"synth", "--out", d, "--dim", "16", "--langs", "en,es,zh,sw", "--layers", "10-27", "--per-lang",
                 "4", "--noise", "0.01"})
                .code,
            0);
  const auto r = run({"sweep", "--input", d + "/synth.axd", "--model", "Qwen-2.5-Instruct-7B", "--grid",
                      "-0.4,-0.2,0,0.2,0.4", "--out", d});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto parsed = parse_curve_csv(bytes::read_text(dir / "sweep.curve.csv"));
  ASSERT_EQ(parsed.curve.points.size(), 5u);
  for (std::size_t i = 1; i < 5; ++i) {
    EXPECT_GT(parsed.curve.points[i].metrics.accuracy, parsed.curve.points[i - 1].metrics.accuracy);
  }
  EXPECT_EQ(parsed.curve.points[2].metrics, parsed.baseline);
}

TEST(Cli, ConfigFileWithFlagOverride) {
  const auto dir = testing_helpers::scratch_dir();
  const auto d = dir.string();
  bytes::write_text(dir / "cfg.json", R"({"dim": 9, "langs": "en,fr,zh", "seed": 5, "run_id": "fromcfg", "noise": 0.1})");
  const auto r = run({"synth", "--config", d + "/cfg.json", "--out", d, "--seed", "6"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto [dump, manifest] = load_dump(dir / "fromcfg.axd");
  EXPECT_EQ(dump.d(), 9u);
  EXPECT_EQ(dump.language_count(), 3u);
  const auto planted = decode_planted(bytes::read_file(dir / "fromcfg.planted.axdp"));
  EXPECT_EQ(planted[0].seed, 6u);
}

TEST(Cli, ErrorCodes) {
  const auto dir = testing_helpers::scratch_dir();
  EXPECT_EQ(run({}).code, cli::kUsage);
  EXPECT_EQ(run({"probe", "--bogus"}).code, cli::kUsage);
  EXPECT_EQ(run({"probe", "--input", (dir / "missing.axd").string()}).code, cli::kIo);
  bytes::write_text(dir / "bad.axd", "nope");
  bytes::write_text(dir / "bad.manifest.json", "{}");
  EXPECT_EQ(run({"probe", "--input", (dir / "bad.axd").string()}).code, cli::kValidation);
  EXPECT_EQ(run({"probe", "--center", "median"}).code, cli::kUsage);
  EXPECT_EQ(run({"--help"}).code, cli::kOk);
}
