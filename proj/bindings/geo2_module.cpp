// placeholder, replaced when the bindings land
#include <pybind11/pybind11.h>
PYBIND11_MODULE(_geo2, m) { m.doc() = "geo2"; }
