// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The rastar Authors

#include "rastar/ner.hpp"

#include <gtest/gtest.h>

#include <random>
#include <set>

namespace rastar {
namespace {

std::vector<BioTag> tags(std::string_view s) {
  std::vector<BioTag> out;
  for (char c : s) out.push_back(parse_bio_tag(std::string_view(&c, 1)));
  return out;
}

std::string tag_string(const std::vector<BioTag>& t) {
  std::string out;
  for (auto x : t) out += to_char(x);
  return out;
}

std::shared_ptr<const PinyinDictionary> dict() {
  static const auto d =
      std::make_shared<const PinyinDictionary>(PinyinDictionary::load(RASTAR_DATA_DIR "/pinyin.tsv"));
  return d;
}

TEST(ExtractSpans, DecodesBio) {
  const auto spans = extract_spans(tags("OBIO"), "我峨眉山");
  ASSERT_EQ(spans.size(), 1u);
  EXPECT_EQ(spans[0].start, 1u);
  EXPECT_EQ(spans[0].end, 3u);
  EXPECT_EQ(spans[0].text, "峨眉");
  EXPECT_TRUE(extract_spans(tags("OOOO"), "我峨眉山").empty());
}

TEST(ExtractSpans, RepairsOrphanI) {
  std::vector<std::size_t> repaired;
  const auto spans = extract_spans(tags("OIIO"), "我峨眉山", &repaired);
  ASSERT_EQ(spans.size(), 1u);
  EXPECT_EQ(spans[0].start, 1u);
  EXPECT_EQ(spans[0].end, 3u);
  EXPECT_EQ(repaired, (std::vector<std::size_t>{1}));

  const auto leading = extract_spans(tags("IOBB"), "我峨眉山", &repaired);
  ASSERT_EQ(leading.size(), 3u);
  EXPECT_EQ(repaired, (std::vector<std::size_t>{0}));
}

TEST(ExtractSpans, LengthMismatchThrows) {
  try {
    extract_spans(tags("OB"), "我峨眉");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::LengthMismatch);
  }
}

TEST(ValidateSpans, RejectsBadSpans) {
  EXPECT_THROW(tags_from_spans(3, std::vector<EntitySpan>{{2, 4, "", {}}}), Error);
  EXPECT_THROW(tags_from_spans(3, std::vector<EntitySpan>{{1, 1, "", {}}}), Error);
  try {
    tags_from_spans(5, std::vector<EntitySpan>{{0, 3, "", {}}, {2, 4, "", {}}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::OverlappingSpans);
  }
}

TEST(AlignTags, IdentityKeepsReferenceTags) {
  const auto ref = TaggedUtterance::from_tags("去峨眉山玩", tags("OBIIO"));
  EXPECT_EQ(tag_string(align_tags_to_hypothesis(ref, "去峨眉山玩")), "OBIIO");
}

TEST(AlignTags, SubstitutionsInheritTags) {
  const auto ref = TaggedUtterance::from_tags("去峨眉山", tags("OBII"));
  EXPECT_EQ(tag_string(align_tags_to_hypothesis(ref, "去我们上")), "OBII");
}

TEST(AlignTags, InsertionInsideEntityIsOThenRepaired) {
  // Hand alignment: 去=去 峨=峨 +X 眉=眉 山=山 玩=玩. X gets O, the following
  // I is orphaned and becomes B.
  const auto ref = TaggedUtterance::from_tags("去峨眉山玩", tags("OBIIO"));
  const auto out = align_tags_to_hypothesis(ref, "去峨X眉山玩");
  EXPECT_EQ(tag_string(out), "OBOBIO");
  EXPECT_TRUE(is_valid_bio(out));
}

TEST(AlignTags, DeletedBeginningIsRepaired) {
  const auto ref = TaggedUtterance::from_tags("去峨眉山玩", tags("OBIIO"));
  EXPECT_EQ(tag_string(align_tags_to_hypothesis(ref, "去眉山玩")), "OBIO");
}

TEST(AlignTags, EmptyInputThrows) {
  const auto ref = TaggedUtterance::from_tags("去峨眉山", tags("OBII"));
  try {
    align_tags_to_hypothesis(ref, "");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::EmptyInput);
  }
}

std::vector<EntitySpan> random_spans(std::mt19937_64& rng, std::size_t length) {
  std::vector<EntitySpan> spans;
  std::bernoulli_distribution start(0.25);
  std::uniform_int_distribution<std::size_t> span_len(1, 4);
  std::size_t i = 0;
  while (i < length) {
    if (start(rng)) {
      const std::size_t end = std::min(length, i + span_len(rng));
      spans.push_back({i, end, "", std::nullopt});
      i = end;
    } else {
      ++i;
    }
  }
  return spans;
}

std::string random_han(std::mt19937_64& rng, std::size_t length) {
  static const auto alphabet = dict()->characters();
  std::uniform_int_distribution<std::size_t> pick(0, alphabet.size() - 1);
  std::u32string out(length, U' ');
  for (auto& c : out) c = alphabet[pick(rng)];
  return utf8::encode(out);
}

TEST(BioProperty, RoundTripAndAlignmentLength) {
  std::mt19937_64 rng(99);
  std::uniform_int_distribution<std::size_t> len(1, 20);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t n = len(rng);
    const std::string text = random_han(rng, n);
    const auto spans = random_spans(rng, n);
    const auto t = tags_from_spans(n, spans);
    EXPECT_TRUE(is_valid_bio(t));
    const auto back = extract_spans(t, text);
    ASSERT_EQ(back.size(), spans.size());
    for (std::size_t i = 0; i < spans.size(); ++i) {
      EXPECT_EQ(back[i].start, spans[i].start);
      EXPECT_EQ(back[i].end, spans[i].end);
    }
    EXPECT_EQ(tags_from_spans(n, back), t);

    const auto ref = TaggedUtterance::from_spans(text, spans);
    EXPECT_EQ(align_tags_to_hypothesis(ref, text), t);
    const std::string hyp = random_han(rng, len(rng));
    const auto aligned = align_tags_to_hypothesis(ref, hyp);
    EXPECT_EQ(aligned.size(), utf8::length(hyp));
    EXPECT_TRUE(is_valid_bio(aligned));
  }
}

TEST(RlmExample, LayoutAndTargets) {
  const auto tagged = TaggedUtterance::from_tags("去峨眉山玩", tags("OBIIO"));
  const auto ex = build_rlm_example(tagged, 0.0, 1);
  ASSERT_EQ(ex.input.size(), 11u);
  EXPECT_EQ(ex.input[0], "去");
  EXPECT_EQ(ex.input[5], kSeparatorToken);
  for (std::size_t i = 6; i < 11; ++i) EXPECT_EQ(ex.input[i], kMaskToken);
  EXPECT_EQ(ex.masked, (std::vector<std::size_t>{6, 7, 8, 9, 10}));
  EXPECT_EQ(ex.target, (std::vector<std::string>{"O", "B", "I", "I", "O"}));
}

TEST(RlmExample, ThirtyPercentOfSixNonEntityCharsIsOne) {
  // 10 characters, 4 of them inside the entity.
  const auto tagged = TaggedUtterance::from_tags("我们明天去峨眉山看日", tags("OOOOOBIIIO"));
  ASSERT_EQ(std::count(tagged.tags.begin(), tagged.tags.end(), BioTag::O), 6);
  const auto ex = build_rlm_example(tagged, 0.3, 5);
  std::size_t text_masks = 0;
  for (std::size_t i = 0; i < 10; ++i) text_masks += ex.input[i] == kMaskToken ? 1 : 0;
  EXPECT_EQ(text_masks, 1u);
  EXPECT_EQ(ex.masked.size(), 11u);
}

TEST(RlmExample, SameSeedSameExample) {
  const auto tagged = TaggedUtterance::from_tags("我们明天去峨眉山看日出", tags("OOOOOBIIOOO"));
  const auto a = build_rlm_example(tagged, 0.5, 42);
  const auto b = build_rlm_example(tagged, 0.5, 42);
  EXPECT_EQ(a.input, b.input);
  EXPECT_EQ(a.masked, b.masked);
  EXPECT_EQ(a.target, b.target);
  EXPECT_THROW(build_rlm_example(tagged, 1.5, 42), Error);
}

TEST(RlmExampleProperty, MaskCountAndEntityPositionsUntouched) {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<std::size_t> len(1, 40);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = len(rng);
    const auto tagged = TaggedUtterance::from_spans(random_han(rng, n), random_spans(rng, n));
    const std::size_t outside =
        static_cast<std::size_t>(std::count(tagged.tags.begin(), tagged.tags.end(), BioTag::O));
    const auto ex = build_rlm_example(tagged, 0.3, static_cast<std::uint64_t>(trial));
    std::size_t text_masks = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (ex.input[i] == kMaskToken) {
        ++text_masks;
        EXPECT_EQ(tagged.tags[i], BioTag::O);
      }
    }
    EXPECT_EQ(text_masks, outside * 3 / 10);
    EXPECT_EQ(ex.input.size(), 2 * n + 1);
  }
}

TEST(SampleIndices, DistinctSortedInRange) {
  std::mt19937_64 rng(1);
  const auto picks = sample_indices(20, 7, rng);
  EXPECT_EQ(picks.size(), 7u);
  EXPECT_TRUE(std::is_sorted(picks.begin(), picks.end()));
  EXPECT_EQ(std::set<std::size_t>(picks.begin(), picks.end()).size(), 7u);
  EXPECT_LT(picks.back(), 20u);
  EXPECT_EQ(masked_count(0.3, 10), 3u);
}

EntityRepository repo_of(std::vector<std::string> surfaces) {
  std::vector<EntityRecord> records;
  for (auto& s : surfaces) records.push_back({std::move(s), EntityType::Unknown});
  return EntityRepository::build(records, dict()).repository;
}

TEST(DictionaryTagger, ExactEntityAtThresholdOne) {
  const auto repo = repo_of({"峨眉山"});
  EXPECT_EQ(tag_string(dictionary_tagger("我们去峨眉山玩", repo, 1.0)), "OOOBIIO");
}

TEST(DictionaryTagger, WeGoUpAgainstMountEmei) {
  // Oracle similarities to 峨眉山 at phoneme granularity: 我们 0.0, 们上 0.4,
  // 我们上 1/3. At 0.3 both 们上 and 我们上 qualify; 们上 scores higher.
  const auto repo = repo_of({"峨眉山"});
  EXPECT_EQ(tag_string(dictionary_tagger("我们上", repo, 0.3)), "OBI");
  EXPECT_EQ(tag_string(dictionary_tagger("我们上", repo, 0.45)), "OOO");
}

TEST(DictionaryTagger, EmptyRepositoryIsAllO) {
  const auto repo = EntityRepository::empty(dict());
  EXPECT_EQ(tag_string(dictionary_tagger("我们去峨眉山", repo, 0.5)), "OOOOOO");
  EXPECT_THROW(dictionary_tagger("我们", repo, 0.0), Error);
}

TEST(DictionaryTagger, OutputIsAlwaysValidBio) {
  const auto repo = repo_of({"峨眉山", "张伟", "北京", "上海", "眉山"});
  DictionaryTagger tagger(repo, 0.5);
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 100; ++trial) {
    const auto t = tagger.tag(random_han(rng, 12));
    EXPECT_EQ(t.size(), 12u);
    EXPECT_TRUE(is_valid_bio(t));
  }
}

}  // namespace
}  // namespace rastar
