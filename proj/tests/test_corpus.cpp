#include <gtest/gtest.h>

#include <sstream>

#include "absa/corpus.hpp"
#include "absa/errors.hpp"
#include "absa/rng.hpp"

using namespace absa;

namespace {

const AspectCatalog& catalog() {
  static const AspectCatalog c = AspectCatalog::germeval();
  return c;
}

std::vector<Document> parse(const std::string& text, Split split = Split::train) {
  std::istringstream in(text);
  return parse_dataset(in, catalog(), split);
}

std::size_t aspect(const char* name) { return *catalog().index(name); }

}  // namespace

TEST(Catalog, GermEvalShape) {
  EXPECT_EQ(catalog().size(), 20u);
  EXPECT_EQ(catalog().name(0), "Allgemein");
  EXPECT_EQ(catalog().hash(), AspectCatalog::germeval().hash());
  EXPECT_NE(catalog().hash(), AspectCatalog({"Allgemein", "Zugfahrt"}).hash());
  EXPECT_THROW(AspectCatalog({"a", "a"}), ConfigError);
  EXPECT_THROW(AspectCatalog(std::vector<std::string>{}), ConfigError);
}

TEST(Dataset, ParsesLabels) {
  const auto docs = parse(
      "d1\tDie Bahn ist zu spät!\tZugfahrt:negative;Allgemein:negative\n"
      "d2\tAlles gut\t\n"
      "\n"
      "d3\tWLAN geht\tConnectivity:positive\r\n");
  ASSERT_EQ(docs.size(), 3u);
  EXPECT_EQ(docs[0].tokens, (std::vector<std::string>{"die", "bahn", "ist", "zu", "spät", "!"}));
  ASSERT_EQ(docs[0].label_pairs.size(), 2u);
  EXPECT_EQ(docs[0].label_pairs[0], std::make_pair(aspect("Zugfahrt"), Polarity::negative));
  EXPECT_TRUE(docs[1].label_pairs.empty());
  EXPECT_EQ(docs[2].labels().at(aspect("Connectivity")), Polarity::positive);
}

TEST(Dataset, UnknownAspectNamesItAndLine) {
  try {
    parse("d1\tok\tAllgemein:neutral\nd2\tx\tFoo:positive\n");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
    EXPECT_NE(std::string(e.what()).find("Foo"), std::string::npos);
  }
  EXPECT_THROW(parse("d1\tx\tAllgemein:great\n"), ParseError);
  EXPECT_THROW(parse("d1\tx\tAllgemein\n"), ParseError);
  EXPECT_THROW(parse("d1\tonly two\n"), ParseError);
  EXPECT_THROW(parse("\tx\tAllgemein:positive\n"), ParseError);
}

TEST(Dataset, IdenticalPairsCollapse) {
  const auto docs = parse("d\tx\tAllgemein:positive;Allgemein:positive;Zugfahrt:neutral\n");
  EXPECT_EQ(docs[0].label_pairs.size(), 2u);
  EXPECT_FALSE(docs[0].has_conflict());
}

TEST(Dataset, ConflictDetectedAndFirstWins) {
  const auto docs = parse("d\tx\tAllgemein:positive;Allgemein:negative\n");
  EXPECT_TRUE(docs[0].has_conflict());
  EXPECT_EQ(docs[0].labels().at(0), Polarity::positive);
}

TEST(Dataset, WriteParseRoundTrip) {
  Rng rng(8);
  std::vector<Document> docs;
  for (int i = 0; i < 50; ++i) {
    Document d;
    d.id = "doc" + std::to_string(i);
    d.text = "text number " + std::to_string(i) + " über Züge";
    const std::size_t n = rng.below(4);
    for (std::size_t k = 0; k < n; ++k) {
      const std::pair<std::size_t, Polarity> p{rng.below(20), polarity_from_index(rng.below(3))};
      if (std::find(d.label_pairs.begin(), d.label_pairs.end(), p) == d.label_pairs.end()) d.label_pairs.push_back(p);
    }
    docs.push_back(d);
  }
  std::stringstream buf;
  write_dataset(docs, catalog(), buf);
  const auto back = parse_dataset(buf, catalog(), Split::dev);
  ASSERT_EQ(back.size(), docs.size());
  for (std::size_t i = 0; i < docs.size(); ++i) {
    EXPECT_EQ(back[i].id, docs[i].id);
    EXPECT_EQ(back[i].text, docs[i].text);
    EXPECT_EQ(back[i].label_pairs, docs[i].label_pairs);
    EXPECT_EQ(back[i].split, Split::dev);
  }
}

TEST(Conflicts, DropsFourOfHundredTrainDocuments) {
  std::ostringstream text;
  for (int i = 0; i < 100; ++i) {
    text << "t" << i << "\tx\t";
    if (i % 25 == 3)
      text << "Zugfahrt:positive;Zugfahrt:negative;Allgemein:neutral";
    else
      text << "Zugfahrt:positive;Allgemein:neutral";
    text << "\n";
  }
  auto [kept, report] = filter_conflicts(parse(text.str()), catalog().size());
  EXPECT_EQ(report.input_count, 100u);
  EXPECT_EQ(report.dropped, 4u);
  EXPECT_EQ(report.retained, 96u);
  EXPECT_EQ(kept.size(), 96u);
  EXPECT_EQ(report.per_aspect[aspect("Zugfahrt")], 4u);
  EXPECT_EQ(report.per_aspect[0], 0u);
  const auto j = report.to_json(catalog());
  EXPECT_EQ(j["dropped"], 4);
  EXPECT_EQ(j["per_aspect"]["Zugfahrt"], 4);
}

TEST(Conflicts, OtherSplitsUntouched) {
  auto docs = parse("d\tx\tAllgemein:positive;Allgemein:negative\n", Split::test_syn);
  auto [kept, report] = filter_conflicts(docs, catalog().size());
  EXPECT_EQ(kept.size(), 1u);
  EXPECT_EQ(report.dropped, 0u);
}

TEST(LabelVector, RoundTripOverRandomMaps) {
  Rng rng(12);
  for (int trial = 0; trial < 10000; ++trial) {
    LabelMap m;
    const std::size_t n = rng.below(21);
    for (std::size_t k = 0; k < n; ++k) m[rng.below(20)] = polarity_from_index(rng.below(3));
    const LabelVector z = to_label_vector(m, catalog());
    ASSERT_EQ(z.classes.size(), 20u);
    ASSERT_EQ(from_label_vector(z, catalog()), m);
  }
}

TEST(LabelVector, Errors) {
  EXPECT_THROW(from_label_vector(LabelVector{{0, 1}}, catalog()), DimensionError);
  LabelVector bad{std::vector<std::uint8_t>(20, 0)};
  bad.classes[3] = 4;
  EXPECT_THROW(from_label_vector(bad, catalog()), ConfigError);
  EXPECT_THROW(to_label_vector(LabelMap{{20, Polarity::positive}}, catalog()), ConfigError);
}

TEST(Splits, NamesRoundTrip) {
  for (Split s : {Split::train, Split::dev, Split::test_syn, Split::test_dia})
    EXPECT_EQ(parse_split(split_name(s)), s);
  EXPECT_FALSE(parse_split("validation").has_value());
  for (Polarity p : {Polarity::positive, Polarity::negative, Polarity::neutral})
    EXPECT_EQ(parse_polarity(polarity_name(p)), p);
}
