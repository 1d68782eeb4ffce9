#pragma once

#include "fiokit/errors.hpp"
#include "fiokit/parallel.hpp"
#include "fiokit/matrixcore.hpp"
#include "fiokit/symplectic.hpp"
#include "fiokit/grid.hpp"
#include "fiokit/fbi.hpp"
#include "fiokit/symbols.hpp"
#include "fiokit/fio.hpp"
#include "fiokit/bounds.hpp"
#include "fiokit/families.hpp"
