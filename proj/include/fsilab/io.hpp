// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace fsilab {

/// Raised when a NaN would be written; the CLI maps it to exit code 4.
class NaNOutput : public std::runtime_error {
public:
    explicit NaNOutput(const std::string& what) : std::runtime_error("NaNOutput: " + what) {}
};

/// A CSV cell: a number, +inf (written "inf"), or text.
struct CsvValue {
    enum class Kind { Number, Text } kind = Kind::Number;
    double number = 0.0;
    std::string text;
    CsvValue(double v) : number(v) {}
    CsvValue(int v) : number(v) {}
    CsvValue(long v) : number(static_cast<double>(v)) {}
    CsvValue(const char* s) : kind(Kind::Text), text(s) {}
    CsvValue(std::string s) : kind(Kind::Text), text(std::move(s)) {}
};

std::string format_number(double v);

/// Comma-separated table with a header row and 17 significant digits.
class CsvWriter {
public:
    explicit CsvWriter(std::vector<std::string> header);
    void row(const std::vector<CsvValue>& cells);
    std::string str() const;
    void write(const std::string& path) const;
    size_t rows() const { return rows_.size(); }

private:
    std::vector<std::string> header_;
    std::vector<std::string> rows_;
};

std::string sha256_file(const std::string& path);
std::string sha256_string(const std::string& data);

void write_binary_vectors(const std::string& path, const std::vector<Eigen::VectorXd>& blocks);
std::vector<Eigen::VectorXd> read_binary_vectors(const std::string& path);

struct SvgSeries {
    std::string label;
    std::vector<double> x, y;
};

/// Static line chart. Returns false (and writes nothing) if the data cannot be plotted.
bool write_svg_plot(const std::string& path, const std::string& title, const std::string& xlabel,
                    const std::string& ylabel, const std::vector<SvgSeries>& series, bool log_y);

}  // namespace fsilab
