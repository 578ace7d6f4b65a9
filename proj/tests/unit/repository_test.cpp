// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The rastar Authors

#include "rastar/repository.hpp"

#include <gtest/gtest.h>

#include <numeric>
#include <random>
#include <sstream>

namespace rastar {
namespace {

std::shared_ptr<const PinyinDictionary> dict() {
  static const auto d =
      std::make_shared<const PinyinDictionary>(PinyinDictionary::load(RASTAR_DATA_DIR "/pinyin.tsv"));
  return d;
}

EntityRepository build(std::vector<std::string> surfaces, PhoneticOptions options = {}) {
  std::vector<EntityRecord> records;
  for (auto& s : surfaces) records.push_back({std::move(s), EntityType::Unknown});
  return EntityRepository::build(records, dict(), options).repository;
}

TEST(BuildRepository, DropsDuplicatesKeepingFirst) {
  const auto result = EntityRepository::build(
      {{"峨眉山", EntityType::Location}, {"峨眉山", EntityType::Person}, {"北京", EntityType::Location}}, dict());
  EXPECT_EQ(result.repository.size(), 2u);
  EXPECT_EQ(result.duplicates_dropped, 1u);
  EXPECT_EQ(result.repository.entities()[0].surface, "峨眉山");
  EXPECT_EQ(result.repository.entities()[0].type, EntityType::Location);
  EXPECT_EQ(result.repository.entities()[1].surface, "北京");
  EXPECT_EQ(result.repository.max_entity_length(), 3u);
}

TEST(BuildRepository, EmptyInputThrows) {
  try {
    EntityRepository::build({}, dict());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::EmptyRepository);
  }
}

TEST(BuildRepository, UnknownCharacterNamesTheEntity) {
  try {
    EntityRepository::build({{"北京", EntityType::Unknown}, {"龘山", EntityType::Unknown}}, dict());
    FAIL();
  } catch (const UnknownCharacterError& e) {
    EXPECT_EQ(e.position(), 0u);
    EXPECT_NE(std::string(e.what()).find("龘山"), std::string::npos);
  }
}

TEST(EntityList, ParsesTypesCommentsAndBlanks) {
  std::istringstream in("# people\n张伟\tPER\n\n峨眉山\tLOC\n北京\n");
  const auto records = parse_entity_list(in);
  ASSERT_EQ(records.size(), 3u);
  EXPECT_EQ(records[0].type, EntityType::Person);
  EXPECT_EQ(records[1].type, EntityType::Location);
  EXPECT_EQ(records[2].type, EntityType::Unknown);
  std::istringstream bad("张伟\tXYZ\n");
  EXPECT_THROW(parse_entity_list(bad), Error);
}

// Hand-built dictionary so every similarity can be worked out on paper.
std::shared_ptr<const PinyinDictionary> toy_dict() {
  auto d = std::make_shared<PinyinDictionary>();
  d->add(U'甲', {PinyinSyllable::parse("jia1")});
  d->add(U'乙', {PinyinSyllable::parse("yi3")});
  d->add(U'丙', {PinyinSyllable::parse("bing3")});
  d->add(U'丁', {PinyinSyllable::parse("ding1")});
  d->add(U'戊', {PinyinSyllable::parse("wu4")});
  return d;
}

TEST(CandidateProbability, FiveEntityToyRepositoryTermByTerm) {
  const PhoneticOptions syl{Granularity::Syllable, false};
  std::vector<EntityRecord> records;
  for (const char* s : {"甲乙", "甲丙", "丁戊", "甲乙丙", "戊"}) records.push_back({s, EntityType::Unknown});
  const auto repo = EntityRepository::build(records, toy_dict(), syl).repository;
  // Query [jia, yi]. Distances 0, 1, 2, 1, 2 over max lengths 2, 2, 2, 3, 2,
  // so similarities 1, 1/2, 0, 2/3, 0 and a normalizer of 13/6.
  const auto scored = candidate_probability("甲乙", repo);
  ASSERT_EQ(scored.size(), 5u);
  const double expected_sim[] = {1.0, 0.5, 0.0, 2.0 / 3.0, 0.0};
  const double expected_p[] = {6.0 / 13.0, 3.0 / 13.0, 0.0, 4.0 / 13.0, 0.0};
  for (std::size_t i = 0; i < 5; ++i) {
    EXPECT_EQ(scored[i].index, i);
    EXPECT_NEAR(scored[i].similarity, expected_sim[i], 1e-12);
    EXPECT_NEAR(scored[i].probability, expected_p[i], 1e-12);
  }
  const auto top = retrieve_top_k("甲乙", repo, 5);
  std::vector<std::string> order;
  for (const auto& c : top.candidates) order.push_back(c.entity.surface);
  // Zero-probability tail: shorter surface first.
  EXPECT_EQ(order, (std::vector<std::string>{"甲乙", "甲乙丙", "甲丙", "戊", "丁戊"}));
}

TEST(CandidateProbability, TwoEntityNormalization) {
  // Similarities 0.6 and 0.2 come from five-token streams at distances 2 and 4.
  auto d = std::make_shared<PinyinDictionary>();
  const char32_t chars[] = {U'甲', U'乙', U'丙', U'丁', U'戊', U'己', U'庚', U'辛'};
  const char* readings[] = {"a1", "b1", "c1", "d1", "e1", "f1", "g1", "h1"};
  for (int i = 0; i < 8; ++i) d->add(chars[i], {PinyinSyllable{"", readings[i], 1}});
  const PhoneticOptions syl{Granularity::Syllable, false};
  const auto repo =
      EntityRepository::build({{"甲乙丙丁戊", EntityType::Unknown}, {"甲己己己己", EntityType::Unknown}}, d, syl)
          .repository;
  const auto scored = candidate_probability("甲乙丙庚辛", repo);
  EXPECT_NEAR(scored[0].similarity, 0.6, 1e-12);
  EXPECT_NEAR(scored[1].similarity, 0.2, 1e-12);
  EXPECT_NEAR(scored[0].probability, 0.75, 1e-12);
  EXPECT_NEAR(scored[1].probability, 0.25, 1e-12);
}

TEST(CandidateProbability, SingleEntityGetsEverything) {
  const auto repo = build({"峨眉山"});
  const auto scored = candidate_probability("峨眉山", repo);
  ASSERT_EQ(scored.size(), 1u);
  EXPECT_DOUBLE_EQ(scored[0].probability, 1.0);
}

TEST(CandidateProbability, AllZeroSimilarityIsUniform) {
  const PhoneticOptions syl{Granularity::Syllable, false};
  const auto repo = build({"北京", "上海", "峨眉山", "张伟"}, syl);
  const auto scored = candidate_probability("xyz", repo);
  for (const auto& s : scored) {
    EXPECT_EQ(s.similarity, 0.0);
    EXPECT_DOUBLE_EQ(s.probability, 0.25);
  }
}

TEST(CandidateProbability, TypeFilterRenormalizesOverSubset) {
  const auto repo = EntityRepository::build(
                        {{"张伟", EntityType::Person}, {"张维", EntityType::Person}, {"北京", EntityType::Location}},
                        dict())
                        .repository;
  const auto scored = candidate_probability("张伟", repo, EntityType::Person);
  ASSERT_EQ(scored.size(), 2u);
  EXPECT_NEAR(scored[0].probability + scored[1].probability, 1.0, 1e-12);
  EXPECT_TRUE(candidate_probability("张伟", repo, EntityType::Organization).empty());
}

TEST(RetrieveTopK, ClampsAndOrders) {
  const auto repo = build({"峨眉山", "眉山", "北京", "上海", "峨山"});
  const auto top3 = retrieve_top_k("鹅眉山", repo, 3);
  ASSERT_EQ(top3.candidates.size(), 3u);
  EXPECT_EQ(top3.query, "鹅眉山");
  EXPECT_EQ(top3.candidates[0].entity.surface, "峨眉山");
  EXPECT_DOUBLE_EQ(top3.candidates[0].similarity, 1.0);
  for (std::size_t i = 1; i < 3; ++i) {
    EXPECT_GE(top3.candidates[i - 1].probability, top3.candidates[i].probability);
  }
  const auto small = build({"北京", "上海"});
  EXPECT_EQ(retrieve_top_k("北京", small, 10).candidates.size(), 2u);
  EXPECT_THROW(retrieve_top_k("北京", small, 0), Error);
}

TEST(RetrieveTopK, HomophoneTieBrokenByByteOrder) {
  const auto repo = build({"张维", "张伟"});
  const auto top = retrieve_top_k("张伟", repo, 2);
  // Same pronunciation and length: byte order decides.
  ASSERT_EQ(top.candidates.size(), 2u);
  EXPECT_DOUBLE_EQ(top.candidates[0].probability, 0.5);
  EXPECT_LT(top.candidates[0].entity.surface, top.candidates[1].entity.surface);
}

TEST(RetrieveTopK, EmptyRepositoryYieldsNothing) {
  const auto repo = EntityRepository::empty(dict());
  EXPECT_TRUE(retrieve_top_k("北京", repo, 3).candidates.empty());
}

std::string random_text(std::mt19937_64& rng, const std::vector<char32_t>& alphabet, std::size_t min_len,
                        std::size_t max_len) {
  std::uniform_int_distribution<std::size_t> len(min_len, max_len);
  std::uniform_int_distribution<std::size_t> pick(0, alphabet.size() - 1);
  std::u32string out(len(rng), U' ');
  for (auto& c : out) c = alphabet[pick(rng)];
  return utf8::encode(out);
}

TEST(RetrieveTopKProperty, PrefixOfFullSortOracle) {
  std::mt19937_64 rng(2026);
  auto alphabet = dict()->characters();
  alphabet.resize(30);  // a small alphabet produces plenty of ties
  for (int trial = 0; trial < 100; ++trial) {
    std::uniform_int_distribution<int> size(1, 50);
    std::vector<EntityRecord> records;
    const int n = size(rng);
    for (int i = 0; i < n; ++i) records.push_back({random_text(rng, alphabet, 1, 4), EntityType::Unknown});
    const PhoneticOptions options{trial % 2 ? Granularity::Syllable : Granularity::Phoneme, false};
    const auto repo = EntityRepository::build(records, dict(), options).repository;
    const std::string query = random_text(rng, alphabet, 1, 4);

    // Oracle: recompute each probability independently, then a full stable sort.
    const auto q = romanize(query, *dict(), options);
    struct Row {
      std::string surface;
      std::size_t length;
      double p;
    };
    std::vector<Row> rows;
    double total = 0.0;
    for (const auto& e : repo.entities()) {
      const auto ep = romanize(e.surface, *dict(), options);
      const double sim = similarity(ep, q);
      total += sim;
      rows.push_back({e.surface, utf8::length(e.surface), sim});
    }
    double sum = 0.0;
    for (auto& r : rows) {
      r.p = total > 0.0 ? r.p / total : 1.0 / static_cast<double>(rows.size());
      sum += r.p;
    }
    EXPECT_NEAR(sum, 1.0, 1e-9);
    std::stable_sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
      if (a.p != b.p) return a.p > b.p;
      if (a.length != b.length) return a.length < b.length;
      return a.surface < b.surface;
    });

    const auto scored = candidate_probability(query, repo);
    double lib_sum = 0.0;
    for (const auto& s : scored) lib_sum += s.probability;
    EXPECT_NEAR(lib_sum, 1.0, 1e-9);

    std::uniform_int_distribution<std::size_t> kdist(1, repo.size() + 2);
    const std::size_t k = kdist(rng);
    const auto top = retrieve_top_k(query, repo, k);
    ASSERT_EQ(top.candidates.size(), std::min(k, repo.size()));
    for (std::size_t i = 0; i < top.candidates.size(); ++i) {
      EXPECT_EQ(top.candidates[i].entity.surface, rows[i].surface) << "trial " << trial << " rank " << i;
    }
    // Growing k keeps the earlier ranking.
    const auto wider = retrieve_top_k(query, repo, k + 3);
    for (std::size_t i = 0; i < top.candidates.size(); ++i) {
      EXPECT_EQ(wider.candidates[i].entity.surface, top.candidates[i].entity.surface);
    }
  }
}

}  // namespace
}  // namespace rastar
