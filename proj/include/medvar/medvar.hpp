#pragma once

// Convenience include for the whole library.

#include "medvar/bootstrap.hpp"
#include "medvar/csv.hpp"
#include "medvar/dataset.hpp"
#include "medvar/design.hpp"
#include "medvar/errors.hpp"
#include "medvar/glm.hpp"
#include "medvar/glmm.hpp"
#include "medvar/mechanism.hpp"
#include "medvar/mediation.hpp"
#include "medvar/model_spec.hpp"
#include "medvar/models.hpp"
#include "medvar/multinomial.hpp"
#include "medvar/parallel.hpp"
#include "medvar/quadrature.hpp"
#include "medvar/report.hpp"
#include "medvar/rng.hpp"
#include "medvar/simulation.hpp"
#include "medvar/version.hpp"
