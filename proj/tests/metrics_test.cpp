#include <cmath>
#include <numeric>

#include "helpers.hpp"

using namespace langsub;
using testing_helpers::gaussian;
using testing_helpers::throws_kind;

namespace {

const std::vector<std::string> kLangs{"en", "es", "fr", "de", "zh", "jp", "ru", "th", "te", "bn", "sw"};

// Correct-answer counts out of 250 items per language, i.e. the reference
// percentages times 2.5.
const std::vector<int> kQwen7bBaseline{231, 207, 197, 193, 207, 181, 203, 198, 92, 169, 42};
const std::vector<int> kQwen3bDisentangle{214, 192, 180, 180, 181, 153, 184, 162, 27, 99, 37};

std::vector<MetricRecord> records_from_counts(const std::vector<int>& correct, int per_lang = 250) {
  std::vector<MetricRecord> out;
  for (std::size_t l = 0; l < kLangs.size(); ++l) {
    for (int i = 0; i < per_lang; ++i) {
      out.push_back({kLangs[l] + "-" + std::to_string(i), kLangs[l], i < correct[l], kLangs[l], kLangs[l]});
    }
  }
  return out;
}

MetricRecord rec(std::string lang, bool ok, std::optional<std::string> reasoning, std::optional<std::string> response) {
  return {"x", std::move(lang), ok, std::move(reasoning), std::move(response)};
}

}  // namespace

TEST(Fidelity, AllMatch) {
  std::vector<MetricRecord> r{rec("en", true, "en", "en"), rec("fr", false, "fr", "fr")};
  EXPECT_EQ(fidelity(r, FidelityChannel::Reasoning), 100.0);
}

TEST(Fidelity, ThreeOfFour) {
  std::vector<MetricRecord> r{rec("en", true, "en", "en"), rec("fr", true, "fr", "fr"), rec("de", true, "de", "de"),
                              rec("zh", true, "en", "zh")};
  EXPECT_EQ(fidelity(r, FidelityChannel::Reasoning), 75.0);
  EXPECT_EQ(fidelity(r, FidelityChannel::Response), 100.0);
}

TEST(Fidelity, UnknownsCountAgainst) {
  // 6 matches, 2 mismatches, 2 undetected
  std::vector<MetricRecord> r;
  for (int i = 0; i < 6; ++i) r.push_back(rec("sw", true, "sw", "sw"));
  r.push_back(rec("sw", true, "en", "sw"));
  r.push_back(rec("sw", true, "fr", "sw"));
  r.push_back(rec("sw", true, std::nullopt, "sw"));
  r.push_back(rec("sw", true, std::nullopt, "sw"));
  EXPECT_EQ(fidelity(r, FidelityChannel::Reasoning), 60.0);
}

TEST(Fidelity, EmptyRejected) {
  EXPECT_TRUE(throws_kind([] { fidelity({}, FidelityChannel::Response); }, ErrorKind::EmptyInput));
}

TEST(AccuracyTable, ReferenceRowAverages) {
  const auto groups = default_resource_groups();
  const auto base = accuracy_table(records_from_counts(kQwen7bBaseline), kLangs, groups);
  EXPECT_EQ(format_fixed(base.average, 2), "69.82");
  EXPECT_NEAR(base.accuracy[0], 92.4, 1e-12);
  EXPECT_NEAR(base.accuracy[10], 16.8, 1e-12);
  const auto dis = accuracy_table(records_from_counts(kQwen3bDisentangle), kLangs, groups);
  EXPECT_EQ(format_fixed(dis.average, 2), "58.51");
  EXPECT_NEAR(dis.accuracy[8], 10.8, 1e-12);
}

TEST(AccuracyTable, SingleLanguageAllCorrect) {
  std::vector<MetricRecord> r{rec("en", true, "en", "en"), rec("en", true, "en", "en")};
  const std::vector<std::string> order{"en"};
  const auto t = accuracy_table(r, order, default_resource_groups());
  EXPECT_EQ(t.accuracy[0], 100.0);
  EXPECT_EQ(t.average, 100.0);
  ASSERT_EQ(t.group_means.size(), 1u);
  EXPECT_EQ(t.group_means[0].first, "high");
}

TEST(AccuracyTable, GroupMeans) {
  const auto t = accuracy_table(records_from_counts(kQwen7bBaseline), kLangs, default_resource_groups());
  ASSERT_EQ(t.group_means.size(), 3u);
  // high: en es fr de zh jp ru
  EXPECT_NEAR(t.group_means[0].second, (92.4 + 82.8 + 78.8 + 77.2 + 82.8 + 72.4 + 81.2) / 7, 1e-9);
  EXPECT_NEAR(t.group_means[2].second, (67.6 + 16.8) / 2, 1e-9);
}

TEST(AccuracyTable, MissingLanguage) {
  std::vector<MetricRecord> r{rec("en", true, "en", "en")};
  const std::vector<std::string> order{"en", "fr"};
  EXPECT_TRUE(throws_kind([&] { accuracy_table(r, order, {}); }, ErrorKind::EmptyLanguage));
}

TEST(Records, CsvParsing) {
  const auto r = parse_records_csv(
      "id,input_lang,correct,reasoning_lang,response_lang\n"
      "1,en,1,en,en\n"
      "2,fr,false,unknown,fr\n"
      "3,zh,true,,und\n");
  ASSERT_EQ(r.size(), 3u);
  EXPECT_TRUE(r[0].correct);
  EXPECT_FALSE(r[1].correct);
  EXPECT_FALSE(r[1].reasoning_language.has_value());
  EXPECT_EQ(r[1].response_language, "fr");
  EXPECT_FALSE(r[2].reasoning_language.has_value());
  EXPECT_FALSE(r[2].response_language.has_value());
}

TEST(Records, CsvErrorsNameLine) {
  try {
    parse_records_csv("id,input_lang,correct,reasoning_lang,response_lang\n1,en,1,en,en\n2,fr,maybe,fr,fr\n");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Parse);
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
  }
  EXPECT_TRUE(throws_kind([] { parse_records_csv("id,input_lang\n"); }, ErrorKind::Parse));
  EXPECT_TRUE(throws_kind([] { parse_records_csv(""); }, ErrorKind::EmptyInput));
}

TEST(Records, JsonlMatchesCsv) {
  const auto a = parse_records_jsonl(
      R"({"id":"1","input_lang":"en","correct":true,"reasoning_lang":"en","response_lang":"en"})"
      "\n"
      R"({"id":"2","input_lang":"fr","correct":false,"reasoning_lang":null,"response_lang":"fr"})"
      "\n");
  const auto b = parse_records_csv("id,input_lang,correct,reasoning_lang,response_lang\n1,en,1,en,en\n2,fr,0,,fr\n");
  EXPECT_EQ(a, b);
}

TEST(TableEmission, CsvAndText) {
  std::vector<LabeledTable> rows{
      {"baseline", accuracy_table(records_from_counts(kQwen7bBaseline), kLangs, default_resource_groups())}};
  const auto csv = table_csv(rows);
  EXPECT_EQ(csv.substr(0, csv.find('\n')),
            "row,en,es,fr,de,zh,jp,ru,th,te,bn,sw,avg,reasoning_fidelity,response_fidelity,group_high,group_mid,group_low");
  EXPECT_NE(csv.find("baseline,92.40,82.80"), std::string::npos);
  EXPECT_NE(csv.find(",69.82,100.00,100.00,"), std::string::npos);
  EXPECT_NE(table_text(rows).find("69.82"), std::string::npos);
}

TEST(CentroidShift, TrivialCases) {
  const MeanEmbeddingMatrix pre{gaussian(1, 5, 4), {"en", "fr", "zh", "sw"}};
  EXPECT_EQ(centroid_shift(pre, pre, "en"), 1.0);
  MeanEmbeddingMatrix collapsed = pre;
  for (Eigen::Index l = 0; l < 4; ++l) collapsed.M.col(l) = pre.M.col(0);
  EXPECT_EQ(centroid_shift(pre, collapsed, "en"), 0.0);
  EXPECT_TRUE(throws_kind([&] { centroid_shift(pre, pre, "de"); }, ErrorKind::InvalidArgument));
  MeanEmbeddingMatrix same{Matrix::Ones(3, 2), {"en", "fr"}};
  EXPECT_TRUE(throws_kind([&] { centroid_shift(same, same, "en"); }, ErrorKind::Degenerate));
}

TEST(CentroidShift, PartialProjectionClosedForm) {
  // Removing only the first planted direction leaves differences along the
  // second: ratio = mean |dG2| / mean ||dG||.
  PlantOptions opts;
  opts.languages = {"en", "es", "zh", "sw"};
  opts.zero_gamma_row = 0;
  const auto model = plant(10, 4, 2, 0.0, 1, 31, opts).first;
  const Matrix M = model.means();
  const MeanEmbeddingMatrix pre{M, opts.languages};
  MeanEmbeddingMatrix post = pre;
  for (Eigen::Index l = 0; l < 4; ++l) post.M.col(l) = ablate(M.col(l), model.true_Ms.leftCols(1), 1.0);
  double num = 0.0, den = 0.0;
  for (Eigen::Index l = 1; l < 4; ++l) {
    num += std::abs(model.true_Gamma(l, 1));
    den += model.true_Gamma.row(l).norm();
  }
  EXPECT_NEAR(centroid_shift(pre, post, "en"), num / den, 1e-12);
}

TEST(CentroidShift, RotationInvariant) {
  std::mt19937_64 rng(4);
  const Matrix R = random_orthonormal(rng, 6, 6);
  const MeanEmbeddingMatrix pre{gaussian(5, 6, 4), {"a", "b", "c", "d"}};
  const MeanEmbeddingMatrix post{gaussian(6, 6, 4), {"a", "b", "c", "d"}};
  const MeanEmbeddingMatrix rpre{R * pre.M, pre.languages}, rpost{R * post.M, post.languages};
  EXPECT_NEAR(centroid_shift(pre, post, "b"), centroid_shift(rpre, rpost, "b"), 1e-9);
}

TEST(Pca, TwoDimensionalIsometry) {
  Matrix pts = gaussian(7, 12, 2);
  pts.rowwise() -= pts.colwise().mean();
  const auto proj = pca2(pts);
  for (Eigen::Index i = 0; i < pts.rows(); ++i)
    for (Eigen::Index j = 0; j < pts.rows(); ++j)
      EXPECT_NEAR((proj.coords.row(i) - proj.coords.row(j)).norm(), (pts.row(i) - pts.row(j)).norm(), 1e-9);
}

TEST(Pca, CollinearPoints) {
  Matrix pts(5, 3);
  for (int i = 0; i < 5; ++i) pts.row(i) = Eigen::RowVector3d(1, 2, -1) * (i - 1.5) + Eigen::RowVector3d(0, 1, 0);
  const auto proj = pca2(pts);
  EXPECT_LE(proj.coords.col(1).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(Pca, MatchesCovarianceEigenOracle) {
  const Matrix pts = gaussian(8, 40, 6) * Vector::LinSpaced(6, 3.0, 0.5).asDiagonal();
  const auto proj = pca2(pts);
  const Matrix centered = pts.rowwise() - pts.colwise().mean();
  Eigen::SelfAdjointEigenSolver<Matrix> eig(centered.transpose() * centered);
  // eigenvalues ascending: the top two are the last columns
  for (int k = 0; k < 2; ++k) {
    const Vector v = eig.eigenvectors().col(5 - k);
    EXPECT_NEAR(std::abs(proj.components.col(k).dot(v)), 1.0, 1e-9);
  }
  const Vector ev = eig.eigenvalues();
  const double tail = ev.head(4).sum();
  const Matrix recon = proj.coords * proj.components.transpose();
  EXPECT_NEAR((centered - recon).squaredNorm(), tail, 1e-8 * ev.sum());
}

TEST(Pca, IdenticalPointsDegenerate) {
  EXPECT_TRUE(throws_kind([] { pca2(Matrix::Ones(4, 3)); }, ErrorKind::Degenerate));
}
