#pragma once

#include <ostream>
#include <string>
#include <string_view>
#include <vector>

namespace dsi {

/// Shortest round-trip decimal form, '.' separator, independent of the global locale.
std::string format_double(double value);

/// Minimal CSV emitter: header row first, LF line endings, no quoting (fields are numeric
/// or plain identifiers).
class CsvWriter {
public:
    CsvWriter(std::ostream& out, const std::vector<std::string>& header);

    CsvWriter& field(double value);
    CsvWriter& field(long long value);
    CsvWriter& field(unsigned long long value);
    CsvWriter& field(std::size_t value) { return field(static_cast<unsigned long long>(value)); }
    CsvWriter& field(int value) { return field(static_cast<long long>(value)); }
    CsvWriter& field(std::string_view value);
    void end_row();

private:
    void separator();

    std::ostream& out_;
    std::size_t columns_;
    std::size_t in_row_ = 0;
};

} // namespace dsi
