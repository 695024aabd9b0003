#pragma once

#include "chronoscope/core.hpp"
#include "chronoscope/error.hpp"
#include "chronoscope/grid.hpp"
#include "chronoscope/interferometer.hpp"
#include "chronoscope/io.hpp"
#include "chronoscope/phase_space.hpp"
#include "chronoscope/retrieval.hpp"
#include "chronoscope/scenario.hpp"
