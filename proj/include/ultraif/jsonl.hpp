#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace ultraif {

using json = nlohmann::json;

// Whole-file helpers.
std::string read_text_file(const std::filesystem::path& path);
// Write via a temp file in the same directory, then rename over the target,
// so readers never observe a half-written file.
void write_text_file_atomic(const std::filesystem::path& path, std::string_view content);

// Strict reader: every line must parse. Blank lines are skipped.
std::vector<json> read_jsonl(const std::filesystem::path& path);

// Lenient reader for foreign corpora: malformed lines are counted, not fatal.
// Returns the number of malformed lines skipped.
std::int64_t for_each_jsonl(const std::filesystem::path& path,
                            const std::function<void(json&&, std::size_t lineno)>& fn);

// Appends records one committed line at a time. A record is durable once
// write() returns: the line is newline-terminated and flushed, which is the
// commit marker the resume logic looks for.
class JsonlWriter {
public:
    explicit JsonlWriter(const std::filesystem::path& path, bool append = false);
    ~JsonlWriter();
    JsonlWriter(const JsonlWriter&) = delete;
    JsonlWriter& operator=(const JsonlWriter&) = delete;

    void write(const json& record);
    void write_raw_line(std::string_view line_without_newline);
    std::int64_t lines_written() const { return lines_; }
    void close();

private:
    std::FILE* f_ = nullptr;
    std::filesystem::path path_;
    std::int64_t lines_ = 0;
};

// Drop a torn (unterminated) final line, returning the bytes removed.
// A file that ends in '\n' (or is empty/missing) is left untouched.
std::uintmax_t truncate_torn_tail(const std::filesystem::path& path);

// Committed lines of a possibly interrupted output file: torn tail ignored,
// remaining lines must parse (they were written through JsonlWriter).
// Missing file reads as empty.
std::vector<json> read_committed_lines(const std::filesystem::path& path);

}  // namespace ultraif
