#include <doctest.h>

#include "promptlearn/error.hpp"
#include "promptlearn/prompting.hpp"
#include "promptlearn/util.hpp"
#include "support/synthetic.hpp"

using namespace pl;

namespace {

ConversationRecord rec(std::string text) { return {"r1", std::move(text), 0}; }

}  // namespace

TEST_SUITE("prompting") {

TEST_CASE("template 1 parses into conversation, literal, mask") {
  const auto t = parse_template("1", "{conversation} Classify this conversation : {mask}");
  REQUIRE(t.segments().size() == 3);
  CHECK(std::holds_alternative<ConversationSlot>(t.segments()[0]));
  CHECK(std::get<Literal>(t.segments()[1]).text == " Classify this conversation : ");
  CHECK(std::holds_alternative<MaskSlot>(t.segments()[2]));
  CHECK(t.fixed_length() == 36);
}

TEST_CASE("template 3 has three segments") {
  CHECK(parse_template("3", "{conversation} What is the intent of the customer ? {mask}").segments().size() == 3);
}

TEST_CASE("template arity and brace errors") {
  CHECK_THROWS_AS(parse_template("x", "{mask} and {mask}"), Error);
  CHECK_THROWS_AS(parse_template("x", "{conversation} {conversation} {mask}"), Error);
  CHECK_THROWS_AS(parse_template("x", "{conversation} no mask"), Error);
  CHECK_THROWS_AS(parse_template("x", "{mask} no conversation"), Error);
  CHECK_THROWS_AS(parse_template("x", "{conversation} {label} {mask}"), Error);
  CHECK_THROWS_AS(parse_template("x", "{conversation} } {mask}"), Error);
  CHECK_THROWS_AS(parse_template("x", "{conversation} {mask"), Error);
}

TEST_CASE("escaped braces are literal and survive to_spec") {
  const auto t = parse_template("b", "{conversation} {{json}} {mask}");
  CHECK(render_prompt(t, rec("x")).text == "x {json} <MASK>");
  CHECK(parse_template("b", t.to_spec()) == t);
}

TEST_CASE("render template 1 with a short conversation") {
  const auto t = default_templates()[0];
  const auto p = render_prompt(t, rec("Hi"));
  CHECK(p.text == "Hi Classify this conversation : <MASK>");
  CHECK_FALSE(p.truncated);
  CHECK(p.template_id == "1");
  CHECK(p.record_id == "r1");
}

TEST_CASE("empty conversation leaves literals and the marker") {
  const auto p = render_prompt(default_templates()[0], rec(""));
  CHECK(p.text == " Classify this conversation : <MASK>");
  CHECK_FALSE(p.truncated);
}

TEST_CASE("truncation keeps the tail of the conversation") {
  const auto t = default_templates()[0];
  std::string conversation;
  for (int i = 0; i < 100; ++i) conversation.push_back(static_cast<char>('a' + i % 26));
  const auto p = render_prompt(t, rec(conversation), 83);
  // Length-count oracle: budget minus the fixed part.
  const std::size_t fixed = std::string(" Classify this conversation : ").size() + std::string("<MASK>").size();
  const std::size_t keep = 83 - fixed;
  CHECK(keep == 47);
  CHECK(p.truncated);
  CHECK(p.text == conversation.substr(100 - keep) + " Classify this conversation : <MASK>");
  CHECK(utf8_length(p.text) == 83);
}

TEST_CASE("truncation counts code points, not bytes") {
  const auto t = parse_template("u", "{conversation}:{mask}");
  const auto p = render_prompt(t, rec("\xc3\xa9\xc3\xa9\xc3\xa9\xc3\xa9"), 9);
  CHECK(p.text == "\xc3\xa9\xc3\xa9:<MASK>");
  CHECK(p.truncated);
}

TEST_CASE("a budget that cannot fit the template is an error") {
  CHECK_THROWS_AS(render_prompt(default_templates()[0], rec("x"), 36), Error);
  CHECK_NOTHROW(render_prompt(default_templates()[0], rec("x"), 37));
}

TEST_CASE("default templates are the four prompt patterns") {
  const auto ts = default_templates();
  REQUIRE(ts.size() == 4);
  CHECK(ts[1].to_spec() == "{conversation} What is the topic of this conversation ? {mask}");
  CHECK(ts[3].to_spec() == "{conversation} We will be happy to help you with your {mask}.");
  CHECK(render_prompt(ts[3], rec("Hi")).text == "Hi We will be happy to help you with your <MASK>.");
}

TEST_CASE("shipped template file matches the compiled defaults") {
  CHECK(load_templates(PL_DATA_DIR "/templates.json") == default_templates());
}

TEST_CASE("descriptive template lists every class") {
  const LabelCatalog cat({{0, "General", "General information and issues customer has before buying at IKEA"},
                          {1, "Product / Service Information", "Information about products and services"},
                          {2, "Other", ""}});
  const auto t = descriptive_template(cat);
  CHECK(t.id() == "5");
  CHECK(render_prompt(t, rec("Hi")).text ==
        "Hi\nGiven this conversation, we have 3 classes:\n"
        "General: General information and issues customer has before buying at IKEA;\n"
        "Product / Service Information: Information about products and services;\n"
        "Other;\n"
        "Please classify this conversation into one class out of these 3 classes: <MASK>");
  // Braces in label text need no escaping and still round-trip.
  const LabelCatalog braces({{0, "A {b}", "x}"}});
  const auto tb = descriptive_template(braces);
  CHECK(parse_template("5", tb.to_spec()) == tb);
}

TEST_CASE("template file round-trip and errors") {
  auto ts = default_templates();
  ts.push_back(descriptive_template(pltest::intent_catalog()));
  CHECK(parse_templates(serialize_templates(ts)) == ts);
  CHECK_THROWS_AS(parse_templates("{}"), Error);
  CHECK_THROWS_AS(parse_templates(R"([{"id":"1"}])"), Error);
}

TEST_CASE("property: rendering substitutes placeholders exactly and respects budgets") {
  Rng rng(5);
  // (spec form, rendered form)
  const std::pair<const char*, const char*> pieces[] = {{" ", " "}, {"Q? ", "Q? "}, {"{{", "{"}, {"}}", "}"},
                                                        {"x", "x"}, {"\n", "\n"}, {"caf\xc3\xa9 ", "caf\xc3\xa9 "},
                                                        {"::", "::"}};
  for (int inst = 0; inst < 300; ++inst) {
    std::string spec_parts[3], text_parts[3];
    for (int s = 0; s < 3; ++s) {
      for (std::uint64_t k = rng.below(4); k > 0; --k) {
        const auto& piece = pieces[rng.below(8)];
        spec_parts[s] += piece.first;
        text_parts[s] += piece.second;
      }
    }
    std::string conversation;
    for (std::uint64_t k = rng.below(40); k > 0; --k) conversation += pieces[rng.below(8)].second;

    const bool mask_first = rng.below(2) == 0;
    const char* first = mask_first ? "{mask}" : "{conversation}";
    const char* second = mask_first ? "{conversation}" : "{mask}";
    const auto t = parse_template("p", spec_parts[0] + first + spec_parts[1] + second + spec_parts[2]);
    const std::string first_text = mask_first ? "<MASK>" : conversation;
    const std::string second_text = mask_first ? conversation : "<MASK>";
    const auto full = render_prompt(t, rec(conversation)).text;
    CHECK(full == text_parts[0] + first_text + text_parts[1] + second_text + text_parts[2]);
    CHECK(parse_template("p", t.to_spec()) == t);

    const std::size_t budget = t.fixed_length() + 1 + rng.below(30);
    const auto p = render_prompt(t, rec(conversation), budget);
    CHECK(utf8_length(p.text) <= budget);
    CHECK(p.truncated == (p.text != full));
    // Only a conversation prefix is removed: the result is the rendering of
    // a suffix of the conversation.
    const auto kept = utf8_length(conversation) - (utf8_length(full) - utf8_length(p.text));
    CHECK(render_prompt(t, rec(std::string(utf8_suffix(conversation, kept)))).text == p.text);
  }
}

}
