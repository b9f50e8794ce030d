#include <gtest/gtest.h>

#include <map>
#include <random>
#include <string>

#include "th/lookahead_table.hpp"
#include "th/pair_oracle.hpp"
#include "th/sequence_window.hpp"

using namespace th;

namespace {

struct Alphabet {
  SymbolRegistry reg;
  std::map<std::string, std::uint64_t> keys;
  SymbolId operator()(const std::string& name) {
    auto [it, fresh] = keys.emplace(name, keys.size() + 1);
    return reg.intern(it->second);
  }
};

const std::vector<std::string> kFigure = {"open",      "read", "mmap", "mmap",  "open", "getrlimit",
                                          "mmap",      "read", "read", "write", "fork", "close"};

std::set<PairTriple> set_of(const LookaheadTable& t) {
  auto v = t.triples();
  return {v.begin(), v.end()};
}

std::vector<SymbolId> random_sequence(std::mt19937_64& rng, std::size_t len, std::uint32_t alphabet) {
  std::vector<SymbolId> seq(len);
  // skewed draws so some pairs repeat and others stay rare
  std::geometric_distribution<std::uint32_t> geo(0.15);
  for (auto& s : seq) s = SymbolId{std::min(geo(rng), alphabet - 1)};
  return seq;
}

}  // namespace

TEST(SequenceWindow, FifoEviction) {
  SequenceWindow w(8);
  EXPECT_EQ(w.capacity(), 9u);
  for (std::uint32_t i = 0; i < 9; ++i) {
    w.push(SymbolId{i});
    EXPECT_EQ(w.fill(), i + 1);
  }
  EXPECT_EQ(w.contents().front(), SymbolId{0});
  w.push(SymbolId{9});
  EXPECT_EQ(w.fill(), 9u);
  EXPECT_EQ(w.contents().front(), SymbolId{1});
  EXPECT_EQ(w.current(), SymbolId{9});
  EXPECT_EQ(w.at_distance(8), SymbolId{1});
}

TEST(SequenceWindow, FigurePrefix) {
  Alphabet a;
  SequenceWindow w(8);
  for (const char* s : {"open", "read", "mmap"}) w.push(a(s));
  EXPECT_EQ(w.contents(), (std::vector<SymbolId>{a("open"), a("read"), a("mmap")}));
}

TEST(LookaheadTable, FigureWalkthrough) {
  Alphabet a;
  SequenceWindow w(8);
  LookaheadTable t;
  std::vector<std::set<PairTriple>> added;
  std::set<PairTriple> before;
  for (const auto& name : kFigure) {
    w.push(a(name));
    t.train(w);
    auto now = set_of(t);
    std::set<PairTriple> diff;
    std::set_difference(now.begin(), now.end(), before.begin(), before.end(), std::inserter(diff, diff.end()));
    added.push_back(diff);
    before = std::move(now);
  }
  // first event has no predecessor
  EXPECT_TRUE(added[0].empty());
  // second: read preceded by open at distance 1
  EXPECT_EQ(added[1], (std::set<PairTriple>{{a("read"), a("open"), 1}}));
  EXPECT_EQ(t.mask(a("read"), a("open")) & 1u, 1u);
  // third: mmap row, read at 1 and open at 2
  EXPECT_EQ(added[2], (std::set<PairTriple>{{a("mmap"), a("read"), 1}, {a("mmap"), a("open"), 2}}));

  // ninth: row read at columns read, mmap, getrlimit, open, mmap, mmap, read, open for distances 1..8
  const std::vector<std::string> ninth = {"read", "mmap", "getrlimit", "open", "mmap", "mmap", "read", "open"};
  SequenceWindow w9(8);
  for (std::size_t i = 0; i < 9; ++i) w9.push(a(kFigure[i]));
  EXPECT_EQ(w9.current(), a("read"));
  for (std::uint32_t d = 1; d <= 8; ++d) {
    EXPECT_EQ(w9.at_distance(d), a(ninth[d - 1])) << d;
    EXPECT_TRUE(t.test(a("read"), a(ninth[d - 1]), d)) << d;
  }

  std::vector<SymbolId> seq;
  for (const auto& n : kFigure) seq.push_back(a(n));
  EXPECT_EQ(set_of(t), brute_force_pairs(seq, 8));
}

TEST(LookaheadTable, ModifiedFlag) {
  SequenceWindow w(2);
  LookaheadTable t;
  w.push(SymbolId{0});
  EXPECT_FALSE(t.train(w));
  w.push(SymbolId{1});
  EXPECT_TRUE(t.train(w));
  w.push(SymbolId{0});
  EXPECT_TRUE(t.train(w));
  w.push(SymbolId{1});
  EXPECT_TRUE(t.train(w));  // distance 2 pair 1<-1 is new
  w.push(SymbolId{0});
  EXPECT_FALSE(t.train(w));
}

TEST(LookaheadTable, MatchesBruteForceOnRandomStreams) {
  std::mt19937_64 rng(2024);
  for (int round = 0; round < 40; ++round) {
    const std::size_t ws = 1 + rng() % kMaxWindowSize;
    const auto alphabet = static_cast<std::uint32_t>(1 + rng() % 64);
    const auto seq = random_sequence(rng, 1 + rng() % 3000, alphabet);
    SequenceWindow w(ws);
    LookaheadTable t;
    for (auto s : seq) {
      w.push(s);
      t.train(w);
    }
    ASSERT_EQ(set_of(t), brute_force_pairs(seq, ws)) << "round " << round << " window " << ws;
    for (const auto& [cur, prev, mask] : t.cells()) {
      (void)cur;
      (void)prev;
      ASSERT_EQ(mask & ~((ws == 32 ? 0u : (1u << ws)) - 1u), 0u);
    }
  }
}

TEST(LookaheadTable, DetectOnTrainingSequenceIsClean) {
  std::mt19937_64 rng(5);
  const auto seq = random_sequence(rng, 2000, 20);
  SequenceWindow w(6);
  LookaheadTable t;
  for (auto s : seq) {
    w.push(s);
    t.train(w);
  }
  SequenceWindow w2(6);
  for (std::size_t i = 0; i < seq.size(); ++i) {
    w2.push(seq[i]);
    ASSERT_EQ(t.detect(w2, i).mismatch_count(), 0u);
  }
}

TEST(LookaheadTable, UnknownSymbolMismatchesWholeWindow) {
  LookaheadTable t;
  SequenceWindow w(8);
  for (std::uint32_t i = 0; i < 20; ++i) {
    w.push(SymbolId{i % 4});
    t.train(w);
  }
  w.push(SymbolId{99});
  const auto r = t.detect(w, 20);
  EXPECT_EQ(r.mismatch_count(), 8u);
  // oracle: the all-zero row mismatches every (distance, predecessor) in the window
  for (std::uint32_t d = 1; d <= 8; ++d) EXPECT_EQ(r.mismatches[d - 1], (Mismatch{d, w.at_distance(d)}));
}

TEST(LookaheadTable, SwappedNeighboursAreFlagged) {
  const std::vector<SymbolId> base = {SymbolId{0}, SymbolId{1}, SymbolId{2}, SymbolId{3}, SymbolId{4}};
  std::vector<SymbolId> trained;
  for (int i = 0; i < 50; ++i) trained.insert(trained.end(), base.begin(), base.end());
  LookaheadTable t;
  SequenceWindow w(4);
  for (auto s : trained) {
    w.push(s);
    t.train(w);
  }
  auto perturbed = trained;
  std::swap(perturbed[102], perturbed[103]);

  // oracle: pairs of the perturbed stream absent from the trained stream
  const auto known = brute_force_pairs(trained, 4);
  const auto seen = brute_force_pairs(perturbed, 4);
  std::size_t novel = 0;
  for (const auto& p : seen) novel += !known.count(p);
  ASSERT_GT(novel, 0u);

  SequenceWindow w2(4);
  std::size_t flagged = 0, max_count = 0;
  for (std::size_t i = 0; i < perturbed.size(); ++i) {
    w2.push(perturbed[i]);
    const auto r = t.detect(w2, i);
    flagged += r.mismatch_count() > 0;
    max_count = std::max(max_count, r.mismatch_count());
    for (const auto& m : r.mismatches) EXPECT_FALSE(known.count({perturbed[i], m.previous, m.distance}));
  }
  EXPECT_GE(max_count, 1u);
  EXPECT_GE(flagged, 1u);
}

TEST(LookaheadTable, MismatchCountBoundedByFill) {
  LookaheadTable t;
  SequenceWindow w(8);
  w.push(SymbolId{1});
  EXPECT_EQ(t.detect(w).mismatch_count(), 0u);
  w.push(SymbolId{2});
  EXPECT_EQ(t.detect(w).mismatch_count(), 1u);
}

TEST(LookaheadTable, CopyIsIndependent) {
  LookaheadTable empty;
  EXPECT_EQ(LookaheadTable(empty), empty);
  EXPECT_TRUE(LookaheadTable(empty).triples().empty());

  LookaheadTable t;
  SequenceWindow w(3);
  for (std::uint32_t s : {1u, 2u, 3u}) {
    w.push(SymbolId{s});
    t.train(w);
  }
  const LookaheadTable copy = t;
  EXPECT_EQ(copy, t);
  w.push(SymbolId{7});
  t.train(w);
  EXPECT_NE(copy, t);
  EXPECT_FALSE(copy.test(SymbolId{7}, SymbolId{3}, 1));
}

TEST(LookaheadTable, CapacityError) {
  LookaheadTable t(4);
  SequenceWindow w(2);
  w.push(SymbolId{1});
  w.push(SymbolId{4});
  EXPECT_THROW(t.train(w), CapacityError);
}
