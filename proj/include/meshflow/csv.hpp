#pragma once

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "meshflow/errors.hpp"

namespace meshflow {

// Plain delimited text, one record per line, no quoting (none of our file
// formats needs it). Delimiter is sniffed from the header: tab if present,
// comma otherwise.

inline void split_fields(std::string_view line, char delim,
                         std::vector<std::string_view>& out) {
    out.clear();
    std::size_t start = 0;
    while (true) {
        std::size_t pos = line.find(delim, start);
        if (pos == std::string_view::npos) {
            out.push_back(line.substr(start));
            break;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
}

inline std::optional<double> parse_double(std::string_view s) {
    if (s.empty()) return std::nullopt;
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
    return v;
}

inline std::optional<long long> parse_int(std::string_view s) {
    if (s.empty()) return std::nullopt;
    long long v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
    return v;
}

class CsvReader {
public:
    explicit CsvReader(const std::string& path) : path_(path), in_(path) {
        if (!in_) throw DataError("cannot open " + path);
        std::string header;
        if (!std::getline(in_, header)) throw DataError(path + ": empty file");
        strip_eol(header);
        delim_ = header.find('\t') != std::string::npos ? '\t' : ',';
        std::vector<std::string_view> cols;
        split_fields(header, delim_, cols);
        for (auto c : cols) columns_.emplace_back(c);
        line_no_ = 1;
    }

    const std::vector<std::string>& columns() const { return columns_; }
    char delimiter() const { return delim_; }
    const std::string& path() const { return path_; }
    std::size_t line_number() const { return line_no_; }

    bool has_column(std::string_view name) const {
        for (const auto& c : columns_)
            if (c == name) return true;
        return false;
    }

    /// Index of a required column; throws if the header lacks it.
    std::size_t column(std::string_view name) const {
        for (std::size_t i = 0; i < columns_.size(); ++i)
            if (columns_[i] == name) return i;
        throw DataError(path_ + ": missing required column '" +
                        std::string(name) + "'");
    }

    /// Reads the next row into `fields`; false at EOF. Blank lines skipped.
    bool next(std::vector<std::string_view>& fields) {
        while (std::getline(in_, row_buf_)) {
            ++line_no_;
            strip_eol(row_buf_);
            if (row_buf_.empty()) continue;
            split_fields(row_buf_, delim_, fields);
            return true;
        }
        return false;
    }

private:
    static void strip_eol(std::string& s) {
        while (!s.empty() && (s.back() == '\r' || s.back() == '\n')) s.pop_back();
    }

    std::string path_;
    std::ifstream in_;
    char delim_ = ',';
    std::vector<std::string> columns_;
    std::string row_buf_;
    std::size_t line_no_ = 0;
};

namespace detail {

[[noreturn]] inline void bad_row(const CsvReader& r, const std::string& why) {
    throw DataError(r.path() + ":" + std::to_string(r.line_number()) + ": " + why);
}

}  // namespace detail

/// Shortest decimal form that round-trips a double exactly.
inline std::string format_double(double v) {
    char buf[40];
    if (v == std::floor(v) && std::abs(v) < 1e15) {
        std::snprintf(buf, sizeof(buf), "%.0f", v);
        return buf;
    }
    for (int prec = 1; prec <= 17; ++prec) {
        std::snprintf(buf, sizeof(buf), "%.*g", prec, v);
        double back = 0.0;
        std::sscanf(buf, "%lg", &back);
        if (back == v) break;
    }
    return buf;
}

class CsvWriter {
public:
    explicit CsvWriter(std::ostream& out, char delim = ',')
        : out_(out), delim_(delim) {}

    template <typename... Fields>
    void row(const Fields&... fields) {
        bool first = true;
        ((emit(fields, first), first = false), ...);
        out_ << '\n';
    }

private:
    void emit(const std::string& s, bool first) { sep(first); out_ << s; }
    void emit(const char* s, bool first) { sep(first); out_ << s; }
    void emit(std::string_view s, bool first) { sep(first); out_ << s; }
    void emit(double v, bool first) { sep(first); out_ << format_double(v); }
    void emit(long long v, bool first) { sep(first); out_ << v; }
    void emit(unsigned long long v, bool first) { sep(first); out_ << v; }
    void emit(int v, bool first) { sep(first); out_ << v; }
    void emit(std::size_t v, bool first) { sep(first); out_ << v; }
    void sep(bool first) {
        if (!first) out_ << delim_;
    }

    std::ostream& out_;
    char delim_;
};

}  // namespace meshflow
