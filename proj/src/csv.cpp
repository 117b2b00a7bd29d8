#include "dsilab/csv.hpp"

#include <array>
#include <charconv>
#include <cmath>
#include <stdexcept>

namespace dsi {

std::string format_double(double value) {
    if (std::isnan(value)) return "nan";
    if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
    std::array<char, 32> buf{};
    const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), value);
    return std::string(buf.data(), res.ptr);
}

CsvWriter::CsvWriter(std::ostream& out, const std::vector<std::string>& header)
    : out_(out), columns_(header.size()) {
    for (const auto& h : header) field(std::string_view(h));
    end_row();
}

void CsvWriter::separator() {
    if (in_row_ > 0) out_ << ',';
    ++in_row_;
}

CsvWriter& CsvWriter::field(double value) {
    separator();
    out_ << format_double(value);
    return *this;
}

CsvWriter& CsvWriter::field(long long value) {
    separator();
    out_ << value;
    return *this;
}

CsvWriter& CsvWriter::field(unsigned long long value) {
    separator();
    out_ << value;
    return *this;
}

CsvWriter& CsvWriter::field(std::string_view value) {
    separator();
    out_ << value;
    return *this;
}

void CsvWriter::end_row() {
    if (in_row_ != columns_) throw std::logic_error("CsvWriter: row width does not match header");
    out_ << '\n';
    in_row_ = 0;
}

} // namespace dsi
