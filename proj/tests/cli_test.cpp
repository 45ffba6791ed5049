#include <gtest/gtest.h>

#include <nlohmann/json.hpp>

#include "ruinscan/pipeline.hpp"
#include "support.hpp"

using namespace ruinscan;

namespace {

std::vector<std::string> small_run(const std::string& stage, const std::filesystem::path& ws) {
  return {stage,
          "--workspace", ws.string(),
          "--set", "synth.extent_x=120",
          "--set", "synth.extent_y=120",
          "--set", "synth.houses=10",
          "--set", "synth.shrubs=3",
          "--set", "ensemble.q=3",
          "--set", "model.epochs=40",
          "--threads", "2"};
}

}  // namespace

TEST(Cli, UnknownKeyExitsWithValidation) {
  testsupport::ScratchDir ws("cli-key");
  EXPECT_EQ(run_cli({"synth", "--workspace", ws.path().string(), "--set", "bogus.key=1"}), 2);
  EXPECT_EQ(run_cli({"teleport"}), 2);
  EXPECT_EQ(run_cli({"grid", "--threads", "0"}), 2);
}

TEST(Cli, MissingUpstreamExitsWithMissingArtifact) {
  testsupport::ScratchDir ws("cli-missing");
  EXPECT_EQ(run_cli({"segment", "--workspace", ws.path().string()}), 3);
  EXPECT_EQ(run_cli({"grid", "--workspace", ws.path().string()}), 3);
  EXPECT_EQ(run_cli({"grid", "--workspace", ws.path().string(), "--set",
                     "input.xyz=" + (ws.path() / "absent.xyz").string()}),
            4);
}

TEST(Cli, SmallPipelineRunsAndChecksHashes) {
  testsupport::ScratchDir ws("cli-pipeline");
  ASSERT_EQ(run_cli(small_run("pipeline", ws.path())), 0);
  for (const char* f : {"synth/site.xyz", "grid/dem.f32", "localize/local_dem.pgm", "segment/delta0_curve.csv",
                        "segment/mbbs.geojson", "label/labels.csv", "chips/index.csv", "train/models.json",
                        "score/scores.csv", "eval/summary.json", "eval/det.svg"})
    EXPECT_TRUE(std::filesystem::exists(ws.path() / f)) << f;
  const auto summary = nlohmann::json::parse(testsupport::slurp(ws.path() / "eval/summary.json"));
  EXPECT_TRUE(summary["eer"].contains("robust"));
  const std::string curve = testsupport::slurp(ws.path() / "segment/delta0_curve.csv");
  EXPECT_EQ(curve.rfind("level,count\n", 0), 0u);

  // Rerunning one stage with the same settings succeeds.
  EXPECT_EQ(run_cli(small_run("eval", ws.path())), 0);
  // Changing a training key invalidates the trained models for scoring.
  auto changed = small_run("score", ws.path());
  changed.insert(changed.end(), {"--set", "model.epochs=41"});
  EXPECT_EQ(run_cli(changed), 2);
}
