#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "promptlearn/corpus.hpp"

namespace pl {

inline constexpr std::string_view kMaskMarker = "<MASK>";

struct ConversationSlot {
  bool operator==(const ConversationSlot&) const = default;
};
struct MaskSlot {
  bool operator==(const MaskSlot&) const = default;
};
struct Literal {
  std::string text;
  bool operator==(const Literal&) const = default;
};

using Segment = std::variant<Literal, ConversationSlot, MaskSlot>;

// A prompt pattern with exactly one conversation slot and one mask slot.
class Template {
 public:
  Template(std::string id, std::vector<Segment> segments);

  const std::string& id() const noexcept { return id_; }
  const std::vector<Segment>& segments() const noexcept { return segments_; }

  // Length in code points of everything except the conversation, with the
  // mask rendered as <MASK>.
  std::size_t fixed_length() const noexcept { return fixed_length_; }

  // Inverse of parse_template; literal braces are doubled.
  std::string to_spec() const;

  bool operator==(const Template& other) const {
    return id_ == other.id_ && segments_ == other.segments_;
  }

 private:
  std::string id_;
  std::vector<Segment> segments_;
  std::size_t fixed_length_ = 0;
};

// Placeholders are `{conversation}` and `{mask}`; `{{` and `}}` escape a
// literal brace. Any other brace use is an error.
Template parse_template(std::string id, std::string_view spec);

struct FilledPrompt {
  std::string text;
  std::string template_id;
  std::string record_id;
  bool truncated = false;
};

// max_chars counts code points. When the rendered prompt would exceed it, the
// oldest part of the conversation is dropped.
FilledPrompt render_prompt(const Template& tmpl, const ConversationRecord& record,
                           std::optional<std::size_t> max_chars = std::nullopt);

// The four few-shot templates.
std::vector<Template> default_templates();

// Instructional zero-shot template listing every catalog label with its
// description. Id "5".
Template descriptive_template(const LabelCatalog& catalog);

// Template file: JSON array of {id, spec}.
std::vector<Template> parse_templates(std::string_view json_text);
std::vector<Template> load_templates(const std::string& path);
std::string serialize_templates(const std::vector<Template>& templates);

}  // namespace pl
