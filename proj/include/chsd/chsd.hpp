#pragma once

// Two decoupled, unconditionally energy-stable schemes for two-phase flow in
// karstic geometry (Cahn-Hilliard-Stokes-Darcy): structured conforming
// meshes, Taylor-Hood P2-P1 fluids, P1-P1 phase field, per-step energy and
// mass auditing, and the section-4 experiment drivers.

#include "chsd/geometry.hpp"
#include "chsd/mesh.hpp"
#include "chsd/quadrature.hpp"
#include "chsd/reference.hpp"
#include "chsd/space.hpp"
#include "chsd/field.hpp"
#include "chsd/params.hpp"
#include "chsd/assembly.hpp"
#include "chsd/linalg.hpp"
#include "chsd/state.hpp"
#include "chsd/ch_step.hpp"
#include "chsd/diagnostics.hpp"
#include "chsd/pd_scheme.hpp"
#include "chsd/fd_scheme.hpp"
#include "chsd/vtk.hpp"
#include "chsd/expr.hpp"
#include "chsd/config.hpp"
#include "chsd/drivers.hpp"
