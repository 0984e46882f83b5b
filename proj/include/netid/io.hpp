#pragma once

#include "netid/core.hpp"

#include <fstream>
#include <string>
#include <vector>

namespace netid {

/// Round-trip text form of a double (printf %.17g).
std::string format_double(double x);

/// Minimal CSV writer: comma separated, no quoting (fields never contain commas).
class CsvWriter {
public:
    explicit CsvWriter(const std::string& path);

    void header(const std::vector<std::string>& names);
    void cell(double x);
    void cell(Index x);
    void cell(int x) { cell(static_cast<Index>(x)); }
    void cell(const std::string& s);
    void cell(const char* s) { cell(std::string(s)); }
    void end_row();

private:
    std::ofstream out_;
    bool first_ = true;
};

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<double>> rows;
};

/// Reads an all-numeric CSV with one header line.
CsvTable read_csv(const std::string& path);

std::string read_text_file(const std::string& path);

} // namespace netid
