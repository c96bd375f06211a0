#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace geo2::plot {

struct Series {
    std::string label;
    std::vector<double> x, y;  // non-finite points break the line
};

// fixed-size line chart; output depends only on the arguments, so repeated
// invocations are byte-identical
void write_line_chart(const std::filesystem::path& path, const std::string& title,
                      const std::string& x_label, const std::string& y_label,
                      const std::vector<Series>& series);

}  // namespace geo2::plot
