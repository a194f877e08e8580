#include <gtest/gtest.h>

#include "compass/config.hpp"
#include "compass/error.hpp"
#include "support/test_env.hpp"

namespace compass::config {
namespace {

TEST(Config, EmptyObjectGivesDefaults) {
  const auto c = parse_config("{}");
  EXPECT_EQ(c.backend.mode, BackendMode::scripted);
  EXPECT_EQ(c.embedder.mode, EmbedderMode::hash);
  EXPECT_EQ(c.embedder.dim, 64u);
  EXPECT_FALSE(c.memory.enabled);
  EXPECT_EQ(c.clustering.min_cluster_size, 3u);
  EXPECT_EQ(c.clock, ClockMode::logical);
  EXPECT_EQ(load_configured_taxonomy(c), taxonomy::default_taxonomy());
  EXPECT_TRUE(load_configured_mapping(c, taxonomy::default_taxonomy()).is_total());
}

TEST(Config, ShippedExampleLoads) {
  const auto c = load_config(testing::source_path("config/compass.example.json"));
  EXPECT_EQ(c.backend.mode, BackendMode::live);
  EXPECT_EQ(c.backend.live.model, "gpt-4o-mini");
  EXPECT_TRUE(c.memory.enabled);
  EXPECT_EQ(c.clock, ClockMode::system);
  ASSERT_TRUE(c.mapping_path.has_value());
  EXPECT_EQ(c.mapping_path->filename(), "trail_mapping.json");
  const auto mapping = load_configured_mapping(c, load_configured_taxonomy(c));
  EXPECT_TRUE(mapping.external_labels().contains("Language-only"));
}

TEST(Config, UnknownKeysRejected) {
  EXPECT_THROW(parse_config(R"({"bakend":{}})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"memory":{"enabeld":true}})"), ConfigError);
}

TEST(Config, RangeAndTypeChecks) {
  EXPECT_THROW(parse_config(R"({"clustering":{"min_cluster_size":1}})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"pipeline":{"truncation_limit":10}})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"pipeline":{"clock":"sundial"}})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"memory":{"enabled":"yes"}})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"backend":{"mode":"live"}})"), ConfigError);
  EXPECT_THROW(parse_config("[1,2]"), ConfigError);
  EXPECT_THROW(parse_config("{"), ConfigError);
}

TEST(Config, RelativePathsResolveAgainstConfigDir) {
  testing::TempDir dir;
  std::filesystem::create_directories(dir / "sub");
  util::write_file_atomic(dir / "sub/script.json", R"({"identify:plan:T1":"x"})");
  util::write_file_atomic(dir / "sub/compass.json", R"({"backend":{"script":"script.json"},"memory":{"dir":"mem"}})");
  const auto c = load_config(dir / "sub/compass.json");
  EXPECT_EQ(*c.backend.script, dir / "sub/script.json");
  EXPECT_EQ(c.memory.dir, dir / "sub/mem");
  const auto b = make_backend(c);
  EXPECT_EQ(b->id(), "scripted");
}

TEST(Config, MissingReferencedFileIsConfigError) {
  EXPECT_THROW(parse_config(R"({"mapping":"nope.json"})", "/nonexistent"), ConfigError);
  EXPECT_THROW(load_config("/nonexistent/compass.json"), ConfigError);
}

TEST(Config, PartialMappingRejected) {
  testing::TempDir dir;
  util::write_file_atomic(dir / "m.json", R"({"external_labels":["L"],"entries":{}})");
  const auto c = parse_config(R"({"mapping":"m.json"})", dir.path());
  EXPECT_THROW(load_configured_mapping(c, taxonomy::default_taxonomy()), UnmappedLeafError);
}

TEST(Config, PriorityAndWeights) {
  const auto c = parse_config(R"({"pipeline":{"priority":{"critical_penalty":0.3},"weights":{"safety":2.0}}})");
  EXPECT_DOUBLE_EQ(c.pipeline.policy.critical_penalty, 0.3);
  EXPECT_DOUBLE_EQ(c.pipeline.policy.weights.at(pipeline::Dimension::safety), 2.0);
  EXPECT_THROW(parse_config(R"({"pipeline":{"weights":{"charisma":1.0}}})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"pipeline":{"priority":{"critical_below":0.9,"high_below":0.5}}})"), ConfigError);
}

}  // namespace
}  // namespace compass::config
