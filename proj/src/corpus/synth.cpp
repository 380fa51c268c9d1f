#include <algorithm>
#include <map>

#include "perfalign/corpus.hpp"
#include "perfalign/error.hpp"

namespace perfalign {

namespace {

constexpr int kMinSnippetLines = 1;
constexpr int kMaxSnippetLines = 15;

int count_lines(std::string_view text) {
  if (!text.empty() && text.back() == '\n') text.remove_suffix(1);
  if (text.find_first_not_of(" \t\r\n") == std::string_view::npos) return 0;
  return static_cast<int>(std::count(text.begin(), text.end(), '\n')) + 1;
}

struct Fenced {
  std::string tag;
  std::string body;
};

std::vector<Fenced> fenced_blocks(std::string_view text) {
  std::vector<Fenced> blocks;
  std::size_t pos = 0;
  while (true) {
    const auto open = text.find("```", pos);
    if (open == std::string_view::npos) break;
    const auto eol = text.find('\n', open);
    if (eol == std::string_view::npos) break;
    std::string tag(text.substr(open + 3, eol - open - 3));
    tag.erase(std::remove_if(tag.begin(), tag.end(), [](unsigned char c) { return std::isspace(c); }), tag.end());
    std::transform(tag.begin(), tag.end(), tag.begin(), [](unsigned char c) { return std::tolower(c); });
    const auto close = text.find("```", eol + 1);
    if (close == std::string_view::npos) break;
    std::string body(text.substr(eol + 1, close - eol - 1));
    while (!body.empty() && (body.back() == '\n' || body.back() == '\r')) body.pop_back();
    blocks.push_back({std::move(tag), std::move(body)});
    pos = close + 3;
  }
  return blocks;
}

}  // namespace

GenerationRequest synth_request(std::string_view seed_snippet) {
  const int lines = count_lines(seed_snippet);
  if (lines < kMinSnippetLines || lines > kMaxSnippetLines) {
    throw ValidationError("seed snippet must have 1-15 lines, got " + std::to_string(lines));
  }
  std::string snippet(seed_snippet);
  while (!snippet.empty() && snippet.back() == '\n') snippet.pop_back();

  GenerationRequest req;
  req.seed_snippet = snippet;
  req.prompt =
      "Here is a code snippet:\n```\n" + snippet +
      "\n```\n"
      "Using the snippet as inspiration, write three things:\n"
      "1. A problem statement inspired by the snippet, in a fenced block tagged `statement`.\n"
      "2. A fast solution to the problem, in a fenced block tagged `fast`.\n"
      "3. A slow but correct solution to the same problem, in a fenced block tagged `slow`.\n";
  return req;
}

SynthSample parse_synth_response(std::string_view text) {
  const auto blocks = fenced_blocks(text);
  std::map<std::string, std::string> tagged;
  for (const auto& b : blocks) {
    if (b.tag == "statement" || b.tag == "problem") tagged.try_emplace("statement", b.body);
    if (b.tag == "fast") tagged.try_emplace("fast", b.body);
    if (b.tag == "slow") tagged.try_emplace("slow", b.body);
  }
  // Untagged responses fall back to positional order.
  if (tagged.empty() && blocks.size() >= 3) {
    tagged["statement"] = blocks[0].body;
    tagged["fast"] = blocks[1].body;
    tagged["slow"] = blocks[2].body;
  }
  for (const char* part : {"statement", "fast", "slow"}) {
    auto it = tagged.find(part);
    if (it == tagged.end() || it->second.find_first_not_of(" \t\r\n") == std::string::npos) {
      throw ParseError(std::string("synthetic response is missing the ") + part + " section");
    }
  }
  return {tagged["statement"], tagged["fast"], tagged["slow"]};
}

}  // namespace perfalign
