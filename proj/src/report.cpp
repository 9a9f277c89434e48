#include "asmr/report.hpp"

#include <charconv>
#include <cmath>
#include <fstream>

#include "asmr/errors.hpp"

namespace asmr {

std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

std::string hex64(std::uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<std::size_t>(i)] = digits[v & 0xF];
        v >>= 4;
    }
    return out;
}

std::string csv_to_string(const std::string& config_hash, const std::vector<std::string>& header,
                          const std::vector<std::vector<std::string>>& rows) {
    std::string out = "# config=" + config_hash + "\n";
    auto append_row = [&out](const std::vector<std::string>& fields) {
        for (std::size_t i = 0; i < fields.size(); ++i) {
            if (i) out += ',';
            out += fields[i];
        }
        out += '\n';
    };
    append_row(header);
    for (const auto& r : rows) append_row(r);
    return out;
}

void write_csv(const std::filesystem::path& path, const std::string& config_hash,
               const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    out << csv_to_string(config_hash, header, rows);
}

}  // namespace asmr
