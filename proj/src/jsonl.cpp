#include "ultraif/jsonl.hpp"

#include <fstream>
#include <sstream>
#include <system_error>

#include "ultraif/errors.hpp"

namespace ultraif {

namespace fs = std::filesystem;

std::string read_text_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open: " + path.string());
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    if (in.bad()) {
        throw IoError("read error: " + path.string());
    }
    return std::move(buf).str();
}

void write_text_file_atomic(const fs::path& path, std::string_view content) {
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw IoError("cannot create: " + tmp.string());
        }
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        out.flush();
        if (!out) {
            throw IoError("write error: " + tmp.string());
        }
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) {
        throw IoError("rename " + tmp.string() + " -> " + path.string() + ": " + ec.message());
    }
}

std::vector<json> read_jsonl(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open: " + path.string());
    }
    std::vector<json> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        json j = json::parse(line, nullptr, false);
        if (j.is_discarded()) {
            throw IoError(path.string() + ":" + std::to_string(lineno) + ": malformed JSON line");
        }
        out.push_back(std::move(j));
    }
    return out;
}

std::int64_t for_each_jsonl(const fs::path& path,
                            const std::function<void(json&&, std::size_t)>& fn) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open: " + path.string());
    }
    std::int64_t malformed = 0;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        json j = json::parse(line, nullptr, false);
        if (j.is_discarded()) {
            ++malformed;
            continue;
        }
        fn(std::move(j), lineno);
    }
    return malformed;
}

JsonlWriter::JsonlWriter(const fs::path& path, bool append) : path_(path) {
    f_ = std::fopen(path.string().c_str(), append ? "ab" : "wb");
    if (!f_) {
        throw IoError("cannot open for writing: " + path.string());
    }
}

JsonlWriter::~JsonlWriter() {
    if (f_) std::fclose(f_);
}

void JsonlWriter::write(const json& record) {
    write_raw_line(record.dump());
}

void JsonlWriter::write_raw_line(std::string_view line) {
    if (!f_) {
        throw IoError("writer already closed: " + path_.string());
    }
    if (std::fwrite(line.data(), 1, line.size(), f_) != line.size() ||
        std::fputc('\n', f_) == EOF || std::fflush(f_) != 0) {
        throw IoError("write error: " + path_.string());
    }
    ++lines_;
}

void JsonlWriter::close() {
    if (f_) {
        std::fclose(f_);
        f_ = nullptr;
    }
}

std::uintmax_t truncate_torn_tail(const fs::path& path) {
    std::error_code ec;
    auto size = fs::file_size(path, ec);
    if (ec || size == 0) return 0;

    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open: " + path.string());
    }
    // Scan backwards in chunks for the last newline.
    const std::uintmax_t chunk = 4096;
    std::uintmax_t pos = size;
    std::string buf;
    while (pos > 0) {
        std::uintmax_t start = pos > chunk ? pos - chunk : 0;
        std::uintmax_t len = pos - start;
        buf.resize(static_cast<std::size_t>(len));
        in.seekg(static_cast<std::streamoff>(start));
        in.read(buf.data(), static_cast<std::streamsize>(len));
        if (!in) {
            throw IoError("read error: " + path.string());
        }
        for (std::size_t i = buf.size(); i-- > 0;) {
            if (buf[i] == '\n') {
                std::uintmax_t keep = start + i + 1;
                if (keep == size) return 0;
                in.close();
                fs::resize_file(path, keep, ec);
                if (ec) {
                    throw IoError("truncate failed: " + path.string() + ": " + ec.message());
                }
                return size - keep;
            }
        }
        pos = start;
    }
    // No newline at all: the whole file is one torn line.
    in.close();
    fs::resize_file(path, 0, ec);
    if (ec) {
        throw IoError("truncate failed: " + path.string() + ": " + ec.message());
    }
    return size;
}

std::vector<json> read_committed_lines(const fs::path& path) {
    if (!fs::exists(path)) return {};
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open: " + path.string());
    }
    std::vector<json> out;
    std::string line;
    while (std::getline(in, line)) {
        if (in.eof() && !line.empty()) break;  // torn tail, not committed
        if (line.empty()) continue;
        json j = json::parse(line, nullptr, false);
        if (j.is_discarded()) {
            throw IoError("corrupt committed line in " + path.string());
        }
        out.push_back(std::move(j));
    }
    return out;
}

}  // namespace ultraif
