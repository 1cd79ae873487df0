#include "solvuln/hash.hpp"

#include <openssl/evp.h>

#include <array>
#include <fstream>
#include <memory>
#include <sstream>
#include <vector>

#include "solvuln/errors.hpp"

namespace solvuln {
namespace {

struct DigestContext {
    std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx{EVP_MD_CTX_new(), &EVP_MD_CTX_free};

    DigestContext() {
        if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1) {
            throw Error(ErrorKind::IOError, "cannot initialise SHA-256");
        }
    }
    void update(std::string_view data) {
        EVP_DigestUpdate(ctx.get(), data.data(), data.size());
    }
    std::string hex() {
        std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
        unsigned int len = 0;
        EVP_DigestFinal_ex(ctx.get(), md.data(), &len);
        static constexpr char kDigits[] = "0123456789abcdef";
        std::string out;
        out.reserve(2 * len);
        for (unsigned int i = 0; i < len; ++i) {
            out.push_back(kDigits[md[i] >> 4]);
            out.push_back(kDigits[md[i] & 0xF]);
        }
        return out;
    }
};

}  // namespace

std::string sha256_hex(std::string_view data) {
    DigestContext d;
    d.update(data);
    return d.hex();
}

std::string sha256_files(const std::filesystem::path& dir, const std::vector<std::string>& names) {
    DigestContext d;
    for (const auto& name : names) {
        d.update(name);
        d.update(std::string_view("\0", 1));
        d.update(read_file(dir / name));
    }
    return d.hex();
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::IOError, "cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::filesystem::path& path, std::string_view contents) {
    if (path.has_parent_path()) {
        std::error_code ec;
        std::filesystem::create_directories(path.parent_path(), ec);
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::IOError, "cannot write " + path.string());
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw Error(ErrorKind::IOError, "short write to " + path.string());
}

}  // namespace solvuln
