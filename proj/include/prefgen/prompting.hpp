#pragma once

// Thought-prompt templates and strict-format splitting of model output into
// a hidden thought part and a user-visible response part. The split is plain
// first-occurrence string matching on the prompt's response marker: a
// response that quotes the marker again must not move the boundary, so the
// first occurrence always wins.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>

#include "prefgen/errors.hpp"

namespace prefgen {

inline constexpr std::string_view kInstructionPlaceholder = "{user instruction}";

inline constexpr std::string_view kGenericThoughtMarker = "Here is my thought process:";
inline constexpr std::string_view kGenericResponseMarker = "Here is my response:";
inline constexpr std::string_view kSpecificResponseMarker = "<R>";

inline constexpr std::string_view kGenericThoughtTemplate =
    "Respond to the following user query in a comprehensive and detailed way. "
    "You can write down your thought process before responding. Write your "
    "thoughts after \"Here is my thought process:\" and write your response "
    "after \"Here is my response:\".\n"
    "\n"
    "User query: {user instruction}";

inline constexpr std::string_view kSpecificThoughtTemplate =
    "Respond to the following user query in a comprehensive and detailed way. "
    "But first write down your internal thoughts. This must include your draft "
    "response and its evaluation. After this, write your final response after "
    "\"<R>\".\n"
    "\n"
    "User query: {user instruction}";

enum class PromptKind { Generic, Specific, Custom };

inline std::string_view prompt_kind_name(PromptKind k) {
    switch (k) {
        case PromptKind::Generic: return "generic";
        case PromptKind::Specific: return "specific";
        case PromptKind::Custom: return "custom";
    }
    return "unknown";
}

struct ThoughtPrompt {
    PromptKind kind = PromptKind::Generic;
    std::string template_text;   // contains {user instruction} exactly once
    std::string response_marker; // non-empty; the response begins after it
    std::string thought_marker;  // optional; stripped from the thought when leading
};

inline ThoughtPrompt generic_thought_prompt() {
    return {PromptKind::Generic, std::string(kGenericThoughtTemplate),
            std::string(kGenericResponseMarker), std::string(kGenericThoughtMarker)};
}

inline ThoughtPrompt specific_thought_prompt() {
    return {PromptKind::Specific, std::string(kSpecificThoughtTemplate),
            std::string(kSpecificResponseMarker), std::string()};
}

inline size_t count_occurrences(std::string_view text, std::string_view needle) {
    if (needle.empty()) return 0;
    size_t n = 0;
    for (size_t pos = text.find(needle); pos != std::string_view::npos;
         pos = text.find(needle, pos + needle.size())) {
        ++n;
    }
    return n;
}

inline void validate_prompt(const ThoughtPrompt& prompt) {
    size_t n = count_occurrences(prompt.template_text, kInstructionPlaceholder);
    if (n == 0) {
        throw ConfigError("MissingPlaceholder: template does not contain \"{user instruction}\"");
    }
    if (n > 1) {
        throw ConfigError("template contains \"{user instruction}\" more than once");
    }
    if (prompt.response_marker.empty()) {
        throw ConfigError("response marker must be non-empty");
    }
}

// Custom template file: header lines "response_marker: ..." and optionally
// "thought_marker: ...", a "---" line, then the template body.
inline ThoughtPrompt load_thought_prompt(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open template file: " + path.string());
    ThoughtPrompt prompt;
    prompt.kind = PromptKind::Custom;
    std::string line;
    bool saw_separator = false;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line == "---") {
            saw_separator = true;
            break;
        }
        auto colon = line.find(':');
        if (colon == std::string::npos) {
            throw ConfigError("template header line is not \"key: value\": " + line);
        }
        std::string key = line.substr(0, colon);
        std::string value = line.substr(colon + 1);
        if (!value.empty() && value.front() == ' ') value.erase(0, 1);
        if (key == "response_marker") {
            prompt.response_marker = value;
        } else if (key == "thought_marker") {
            prompt.thought_marker = value;
        } else {
            throw ConfigError("unknown template header key: " + key);
        }
    }
    if (!saw_separator) throw ConfigError("template file has no \"---\" separator line");
    std::ostringstream body;
    body << in.rdbuf();
    prompt.template_text = body.str();
    if (!prompt.template_text.empty() && prompt.template_text.back() == '\n') {
        prompt.template_text.pop_back();
    }
    validate_prompt(prompt);
    return prompt;
}

// Substitutes the instruction into the template. The result is the exact
// generation input (prompt + instruction).
inline std::string render_prompt(const ThoughtPrompt& prompt, const std::string& instruction) {
    if (instruction.empty()) throw std::invalid_argument("instruction must be non-empty");
    validate_prompt(prompt);
    std::string out = prompt.template_text;
    out.replace(out.find(kInstructionPlaceholder), kInstructionPlaceholder.size(), instruction);
    return out;
}

inline constexpr std::string_view kWhitespace = " \t\r\n\v\f";

inline std::string_view trim_view(std::string_view s) {
    size_t b = s.find_first_not_of(kWhitespace);
    if (b == std::string_view::npos) return {};
    size_t e = s.find_last_not_of(kWhitespace);
    return s.substr(b, e - b + 1);
}

inline std::string trim(std::string_view s) { return std::string(trim_view(s)); }

// Character count of a UTF-8 string (continuation bytes are not counted).
// This is the length unit for all length statistics and length control.
inline size_t utf8_length(std::string_view s) {
    size_t n = 0;
    for (unsigned char c : s) {
        if ((c & 0xc0) != 0x80) ++n;
    }
    return n;
}

enum class ParseFailure {
    MissingMarker, // response marker never occurs in the raw text
    EmptyResponse, // marker present but nothing after it
    EmptySlot,     // generation slot produced nothing (timeout / exhausted retries)
};

inline std::string_view parse_failure_name(ParseFailure f) {
    switch (f) {
        case ParseFailure::MissingMarker: return "missing_marker";
        case ParseFailure::EmptyResponse: return "empty_response";
        case ParseFailure::EmptySlot: return "empty_slot";
    }
    return "unknown";
}

struct ParsedOutput {
    bool ok = false;
    std::string thought;
    std::string response;
    ParseFailure failure = ParseFailure::MissingMarker;

    static ParsedOutput success(std::string thought, std::string response) {
        ParsedOutput p;
        p.ok = true;
        p.thought = std::move(thought);
        p.response = std::move(response);
        return p;
    }
    static ParsedOutput error(ParseFailure f) {
        ParsedOutput p;
        p.failure = f;
        return p;
    }
};

// Splits raw model output at the FIRST occurrence of the response marker.
// Thought = text before it (leading thought marker stripped), response =
// text after it; both whitespace-trimmed. Pure function; parse errors are
// values, not failures.
inline ParsedOutput split_output(const ThoughtPrompt& prompt, std::string_view raw_text) {
    size_t pos = raw_text.find(prompt.response_marker);
    if (pos == std::string_view::npos) {
        return ParsedOutput::error(ParseFailure::MissingMarker);
    }
    std::string_view before = trim_view(raw_text.substr(0, pos));
    if (!prompt.thought_marker.empty() && before.substr(0, prompt.thought_marker.size()) == prompt.thought_marker) {
        before = trim_view(before.substr(prompt.thought_marker.size()));
    }
    std::string_view after = trim_view(raw_text.substr(pos + prompt.response_marker.size()));
    if (after.empty()) {
        return ParsedOutput::error(ParseFailure::EmptyResponse);
    }
    return ParsedOutput::success(std::string(before), std::string(after));
}

// One sampled generation: raw text plus its parse outcome and part lengths.
struct CandidateOutput {
    std::string instruction_id;
    int candidate_index = 0;
    std::string raw_text;
    ParsedOutput parse;
    size_t thought_len_chars = 0;  // 0 on parse error
    size_t response_len_chars = 0; // 0 on parse error
};

inline CandidateOutput make_candidate(std::string instruction_id, int candidate_index,
                                      std::string raw_text, const ThoughtPrompt& prompt) {
    CandidateOutput c;
    c.instruction_id = std::move(instruction_id);
    c.candidate_index = candidate_index;
    c.raw_text = std::move(raw_text);
    c.parse = c.raw_text.empty() ? ParsedOutput::error(ParseFailure::EmptySlot)
                                 : split_output(prompt, c.raw_text);
    if (c.parse.ok) {
        c.thought_len_chars = utf8_length(c.parse.thought);
        c.response_len_chars = utf8_length(c.parse.response);
    }
    return c;
}

} // namespace prefgen
