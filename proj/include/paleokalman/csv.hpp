#ifndef PALEOKALMAN_CSV_HPP
#define PALEOKALMAN_CSV_HPP

// Minimal RFC 4180 reader/writer: quoted fields, doubled quotes, CRLF.

#include <charconv>
#include <cstddef>
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "paleokalman/errors.hpp"

namespace paleokalman::csv {

/// Reads one record per call. Quoted fields may span lines; `line()` is the
/// 1-based line where the last record started. Lines starting with '#' are
/// skipped (tool output carries a provenance comment on top).
class Reader {
public:
    explicit Reader(std::istream& in, bool skip_comments = true) : in_(in), skip_comments_(skip_comments) {}

    std::optional<std::vector<std::string>> next() {
        std::string text;
        do {
            if (!std::getline(in_, text)) return std::nullopt;
            ++physical_;
            if (physical_ == 1 && text.size() >= 3 && text.compare(0, 3, "\xEF\xBB\xBF") == 0) text.erase(0, 3);
        } while (skip_comments_ && !text.empty() && text.front() == '#');
        record_line_ = physical_;

        std::vector<std::string> fields;
        std::string field;
        bool quoted = false;
        std::size_t i = 0;
        for (;;) {
            if (i >= text.size()) {
                if (quoted) {
                    std::string more;
                    if (!std::getline(in_, more)) throw ParseError("unterminated quoted field", record_line_);
                    ++physical_;
                    text += '\n';
                    text += more;
                    continue;
                }
                break;
            }
            const char c = text[i++];
            if (quoted) {
                if (c == '"') {
                    if (i < text.size() && text[i] == '"') {
                        field += '"';
                        ++i;
                    } else {
                        quoted = false;
                    }
                } else {
                    field += c;
                }
            } else if (c == '"') {
                quoted = true;
            } else if (c == ',') {
                fields.push_back(std::move(field));
                field.clear();
            } else if (c == '\r' && i == text.size()) {
                // CRLF line ending
            } else {
                field += c;
            }
        }
        fields.push_back(std::move(field));
        return fields;
    }

    std::size_t line() const noexcept { return record_line_; }

private:
    std::istream& in_;
    bool skip_comments_;
    std::size_t physical_ = 0;
    std::size_t record_line_ = 0;
};

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
    return s;
}

/// Parses a whole field as a double; nullopt if it is not a number.
inline std::optional<double> to_double(std::string_view s) {
    s = trim(s);
    if (!s.empty() && s.front() == '+') s.remove_prefix(1);
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) return std::nullopt;
    return v;
}

inline std::string quote(std::string_view s) {
    if (s.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(s);
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    out += '"';
    return out;
}

/// Shortest representation that round-trips.
inline std::string format(double x) {
    char buf[32];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, ptr);
}

}  // namespace paleokalman::csv

#endif  // PALEOKALMAN_CSV_HPP
