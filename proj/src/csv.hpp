#pragma once

// Minimal RFC 4180 reader/writer shared by the file formats in this library.

#include <istream>
#include <string>
#include <string_view>
#include <vector>

namespace llmcer::detail {

class CsvReader {
  public:
    explicit CsvReader(std::istream& in, char delimiter = ',') : in_(in), delim_(delimiter) {}

    /// Reads one logical row (quoted fields may span lines). False at end of input.
    bool next(std::vector<std::string>& row) {
        row.clear();
        std::string field;
        bool quoted = false;
        bool any = false;
        char c;
        while (in_.get(c)) {
            any = true;
            if (quoted) {
                if (c == '"') {
                    if (in_.peek() == '"') {
                        in_.get(c);
                        field += '"';
                    } else {
                        quoted = false;
                    }
                } else {
                    field += c;
                }
                continue;
            }
            if (c == '"') {
                quoted = true;
            } else if (c == delim_) {
                row.push_back(std::move(field));
                field.clear();
            } else if (c == '\n') {
                row.push_back(std::move(field));
                return true;
            } else if (c != '\r') {
                field += c;
            }
        }
        if (!any) return false;
        row.push_back(std::move(field));
        return true;
    }

  private:
    std::istream& in_;
    char delim_;
};

inline std::string csv_escape(std::string_view field) {
    if (field.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(field);
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out += '"';
        out += c;
    }
    out += '"';
    return out;
}

}  // namespace llmcer::detail
