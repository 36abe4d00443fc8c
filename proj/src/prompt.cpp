#include <algorithm>
#include <cctype>
#include <charconv>
#include <fmt/format.h>
#include <map>

#include "llmcer/error.hpp"
#include "llmcer/llm_gateway.hpp"

namespace llmcer {

namespace {

constexpr std::string_view kSystemText =
    "You are an expert in entity resolution. Records that describe the same real-world entity "
    "belong in the same group; records of different entities must be kept apart.";

constexpr std::string_view kInstruction =
    "Group the following records by the real-world entity they refer to. Every label must appear "
    "in exactly one group. Answer with one line per group, listing the labels of that group "
    "separated by commas, and nothing else.";

constexpr std::string_view kBatchInstruction =
    "Group the records of each set below by the real-world entity they refer to. Sets are "
    "independent and labels restart in every set. Every label of a set must appear in exactly one "
    "group of that set. For each set, write its header line (for example \"SET 1\") followed by one "
    "line per group, listing the labels of that group separated by commas, and nothing else.";

void append_members(std::string& out, const RecordSet& set, std::span<const Record> records) {
    for (std::size_t k = 0; k < set.members.size(); ++k) {
        const Record& r = records[set.members[k].representative];
        out += fmt::format("R{}", k + 1);
        for (const auto& attr : r.attributes) {
            if (attr.value.empty()) continue;
            out += " | ";
            out += attr.name;
            out += ": ";
            out += attr.value;
        }
        out += '\n';
    }
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

/// Position of "SET <n>" at the start of a line (after optional markup), or nullopt.
std::optional<std::size_t> set_header(std::string_view line) {
    line = trim(line);
    while (!line.empty() && (line.front() == '#' || line.front() == '*')) line.remove_prefix(1);
    line = trim(line);
    if (line.size() < 4) return std::nullopt;
    if (!(std::toupper(static_cast<unsigned char>(line[0])) == 'S' &&
          std::toupper(static_cast<unsigned char>(line[1])) == 'E' &&
          std::toupper(static_cast<unsigned char>(line[2])) == 'T')) {
        return std::nullopt;
    }
    line.remove_prefix(3);
    line = trim(line);
    std::size_t value = 0;
    auto [ptr, ec] = std::from_chars(line.data(), line.data() + line.size(), value);
    if (ec != std::errc{} || ptr == line.data()) return std::nullopt;
    return value;
}

}  // namespace

Prompt build_prompt(std::span<const RecordSet> sets, std::span<const Record> records) {
    Prompt p;
    p.system_text = std::string(kSystemText);
    for (const auto& set : sets) {
        PromptSection section{set.set_id, {}};
        for (const auto& node : set.members) section.shown.push_back(node.representative);
        p.sections.push_back(std::move(section));
    }
    if (sets.size() == 1) {
        p.user_text = std::string(kInstruction) + "\n\n";
        append_members(p.user_text, sets.front(), records);
        return p;
    }
    p.user_text = std::string(kBatchInstruction) + "\n";
    for (std::size_t j = 0; j < sets.size(); ++j) {
        p.user_text += fmt::format("\nSET {}\n", j + 1);
        append_members(p.user_text, sets[j], records);
    }
    return p;
}

SetClustering parse_clustering(std::string_view response, std::size_t member_count, std::string source) {
    SetClustering out{std::move(source), {}};
    std::vector<bool> seen(member_count, false);
    std::size_t line_start = 0;
    while (line_start <= response.size()) {
        const std::size_t line_end = std::min(response.find('\n', line_start), response.size());
        const std::string_view line = response.substr(line_start, line_end - line_start);
        line_start = line_end + 1;

        std::vector<std::size_t> group;
        for (std::size_t i = 0; i < line.size(); ++i) {
            const bool boundary = i == 0 || !std::isalnum(static_cast<unsigned char>(line[i - 1]));
            if (!boundary || (line[i] != 'R' && line[i] != 'r')) continue;
            std::size_t j = i + 1;
            while (j < line.size() && std::isdigit(static_cast<unsigned char>(line[j]))) ++j;
            if (j == i + 1) continue;
            if (j < line.size() && std::isalpha(static_cast<unsigned char>(line[j]))) continue;
            std::size_t label = 0;
            std::from_chars(line.data() + i + 1, line.data() + j, label);
            if (label == 0 || label > member_count) {
                throw Error(ErrorCode::UnknownLabel, fmt::format("R{}", label));
            }
            if (seen[label - 1]) throw Error(ErrorCode::DuplicateMember, fmt::format("R{}", label));
            seen[label - 1] = true;
            group.push_back(label - 1);
            i = j - 1;
        }
        if (!group.empty()) out.groups.push_back(std::move(group));
    }
    if (out.groups.empty()) {
        throw Error(ErrorCode::MalformedResponse, "no record labels found in response");
    }
    for (std::size_t pos = 0; pos < member_count; ++pos) {
        if (!seen[pos]) throw Error(ErrorCode::MissingMember, fmt::format("R{}", pos + 1));
    }
    return out;
}

std::vector<SetClustering> parse_batch(std::string_view response, std::span<const RecordSet> sets) {
    if (sets.size() == 1) {
        return {parse_clustering(response, sets.front().size(), sets.front().set_id)};
    }
    std::map<std::size_t, std::string> sections;
    std::optional<std::size_t> current;
    std::size_t line_start = 0;
    while (line_start <= response.size()) {
        const std::size_t line_end = std::min(response.find('\n', line_start), response.size());
        const std::string_view line = response.substr(line_start, line_end - line_start);
        line_start = line_end + 1;
        if (auto header = set_header(line)) {
            current = *header;
            sections[*header];
            continue;
        }
        if (current) {
            sections[*current] += line;
            sections[*current] += '\n';
        }
    }
    std::vector<SetClustering> out;
    for (std::size_t j = 0; j < sets.size(); ++j) {
        auto it = sections.find(j + 1);
        if (it == sections.end()) {
            throw Error(ErrorCode::MalformedResponse, fmt::format("missing section SET {}", j + 1));
        }
        out.push_back(parse_clustering(it->second, sets[j].size(), sets[j].set_id));
    }
    return out;
}

std::string render_clustering(const SetClustering& clustering) {
    std::string out;
    for (const auto& group : clustering.groups) {
        auto sorted = group;
        std::sort(sorted.begin(), sorted.end());
        for (std::size_t i = 0; i < sorted.size(); ++i) {
            if (i) out += ',';
            out += fmt::format("R{}", sorted[i] + 1);
        }
        out += '\n';
    }
    return out;
}

}  // namespace llmcer
