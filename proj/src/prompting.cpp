#include "promptlearn/prompting.hpp"

#include <nlohmann/json.hpp>

#include "promptlearn/error.hpp"
#include "promptlearn/util.hpp"

namespace pl {

using nlohmann::json;

Template::Template(std::string id, std::vector<Segment> segments)
    : id_(std::move(id)), segments_(std::move(segments)) {
  int conversations = 0;
  int masks = 0;
  for (const auto& seg : segments_) {
    if (const auto* lit = std::get_if<Literal>(&seg)) {
      if (lit->text.empty()) fail(ErrorCode::kParse, "template '" + id_ + "': empty literal segment");
      fixed_length_ += utf8_length(lit->text);
    } else if (std::holds_alternative<ConversationSlot>(seg)) {
      ++conversations;
    } else {
      ++masks;
      fixed_length_ += kMaskMarker.size();
    }
  }
  if (masks != 1) {
    fail(ErrorCode::kParse, "template '" + id_ + "': expected exactly one {mask}, found " + std::to_string(masks));
  }
  if (conversations != 1) {
    fail(ErrorCode::kParse,
         "template '" + id_ + "': expected exactly one {conversation}, found " + std::to_string(conversations));
  }
}

std::string Template::to_spec() const {
  std::string out;
  for (const auto& seg : segments_) {
    if (const auto* lit = std::get_if<Literal>(&seg)) {
      for (char c : lit->text) {
        out.push_back(c);
        if (c == '{' || c == '}') out.push_back(c);
      }
    } else if (std::holds_alternative<ConversationSlot>(seg)) {
      out += "{conversation}";
    } else {
      out += "{mask}";
    }
  }
  return out;
}

Template parse_template(std::string id, std::string_view spec) {
  if (spec.empty()) fail(ErrorCode::kParse, "template '" + id + "': empty spec");
  std::vector<Segment> segments;
  std::string literal;
  auto flush = [&] {
    if (!literal.empty()) segments.emplace_back(Literal{std::move(literal)});
    literal.clear();
  };
  for (std::size_t i = 0; i < spec.size(); ++i) {
    const char c = spec[i];
    if (c == '{' && i + 1 < spec.size() && spec[i + 1] == '{') {
      literal.push_back('{');
      ++i;
    } else if (c == '}' && i + 1 < spec.size() && spec[i + 1] == '}') {
      literal.push_back('}');
      ++i;
    } else if (c == '{') {
      const std::size_t close = spec.find('}', i + 1);
      if (close == std::string_view::npos) fail(ErrorCode::kParse, "template '" + id + "': unterminated '{'");
      const std::string_view name = spec.substr(i + 1, close - i - 1);
      flush();
      if (name == "conversation") {
        segments.emplace_back(ConversationSlot{});
      } else if (name == "mask") {
        segments.emplace_back(MaskSlot{});
      } else {
        fail(ErrorCode::kParse, "template '" + id + "': unknown placeholder {" + std::string(name) + "}");
      }
      i = close;
    } else if (c == '}') {
      fail(ErrorCode::kParse, "template '" + id + "': unmatched '}'");
    } else {
      literal.push_back(c);
    }
  }
  flush();
  return Template(std::move(id), std::move(segments));
}

FilledPrompt render_prompt(const Template& tmpl, const ConversationRecord& record,
                           std::optional<std::size_t> max_chars) {
  std::string_view conversation = record.text;
  bool truncated = false;
  if (max_chars) {
    if (*max_chars <= tmpl.fixed_length()) {
      fail(ErrorCode::kInvalidArgument, "max_chars " + std::to_string(*max_chars) + " leaves no room for the conversation in template '" +
                                            tmpl.id() + "' (fixed length " + std::to_string(tmpl.fixed_length()) + ")");
    }
    const std::size_t budget = *max_chars - tmpl.fixed_length();
    if (utf8_length(conversation) > budget) {
      conversation = utf8_suffix(conversation, budget);
      truncated = true;
    }
  }

  FilledPrompt out;
  out.template_id = tmpl.id();
  out.record_id = record.id;
  out.truncated = truncated;
  for (const auto& seg : tmpl.segments()) {
    if (const auto* lit = std::get_if<Literal>(&seg)) {
      out.text += lit->text;
    } else if (std::holds_alternative<ConversationSlot>(seg)) {
      out.text += conversation;
    } else {
      out.text += kMaskMarker;
    }
  }
  return out;
}

std::vector<Template> default_templates() {
  return {
      parse_template("1", "{conversation} Classify this conversation : {mask}"),
      parse_template("2", "{conversation} What is the topic of this conversation ? {mask}"),
      parse_template("3", "{conversation} What is the intent of the customer ? {mask}"),
      parse_template("4", "{conversation} We will be happy to help you with your {mask}."),
  };
}

Template descriptive_template(const LabelCatalog& catalog) {
  const std::string n = std::to_string(catalog.size());
  std::string body = "\nGiven this conversation, we have " + n + " classes:\n";
  for (const auto& e : catalog.entries()) {
    body += e.name;
    if (!e.description.empty()) body += ": " + e.description;
    body += ";\n";
  }
  body += "Please classify this conversation into one class out of these " + n + " classes: ";
  // Built from segments so braces in label text need no escaping.
  return Template("5", {ConversationSlot{}, Literal{std::move(body)}, MaskSlot{}});
}

std::vector<Template> parse_templates(std::string_view json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::exception& e) {
    fail(ErrorCode::kParse, std::string("template file: ") + e.what());
  }
  if (!doc.is_array()) fail(ErrorCode::kParse, "template file must be a JSON array");
  std::vector<Template> out;
  for (const auto& item : doc) {
    if (!item.is_object() || !item.contains("id") || !item["id"].is_string() || !item.contains("spec") ||
        !item["spec"].is_string()) {
      fail(ErrorCode::kParse, "template entries need string 'id' and 'spec'");
    }
    out.push_back(parse_template(item["id"].get<std::string>(), item["spec"].get<std::string>()));
  }
  return out;
}

std::vector<Template> load_templates(const std::string& path) { return parse_templates(read_file(path)); }

std::string serialize_templates(const std::vector<Template>& templates) {
  json doc = json::array();
  for (const auto& t : templates) doc.push_back({{"id", t.id()}, {"spec", t.to_spec()}});
  return doc.dump(2) + "\n";
}

}  // namespace pl
