"""cfherit: counterfactual heritability and its identifiable bounds.

Computes the counterfactual heritability xi = Var(Y(G) - Y(G')) / 2 Var(Y)
of structural phenotype models, its identifiable lower/upper bounds from
extremal quantile couplings and conditional-moment decompositions, and the
classical notions it generalizes (broad/narrow sense, twin, sibling
regression, plant entry-mean), plus plug-in estimation of the bounds from
tabular data.
"""

from .dsl import (
    DistributionSpec,
    PhenotypeModel,
    classify,
    evaluate,
    load_model,
    parse_expr,
    parse_model,
)
from .errors import (
    CFHeritError,
    DegeneratePhenotypeError,
    DegenerateStratumError,
    ModelSyntaxError,
    ModelValidationError,
    ReportInconsistencyError,
)
from .estimands import (
    HeritabilityReport,
    SiblingModel,
    broad_h2,
    genetic_correlation,
    moment_bounds,
    narrow_h2,
    rdr_quantities,
    report,
    twin_quantities,
    xi,
)
from .coupling import comonotone_msd, countermonotone_msd, frechet_oracle, xi_l, xi_u
from .empirical import Dataset, estimate_bounds, load_table
from .genetics import (
    AlleleFrequency,
    FamilyConfiguration,
    GenotypeDistribution,
    enumerate_family_space,
    hwe_dist,
    mendelian_child_dist,
    sib_pair_joint,
)
from .laws import DiscreteLaw, EmpiricalLaw, MixtureLaw, NormalLaw
from .moments import (
    ConditionalLaw,
    EngineConfig,
    cond_moments,
    diff_moments,
    mc_sample,
    variance_decomposition,
)
from .plant import PlantDesign, fixed_design, plant_heritability, simulate_entry_means

__version__ = "0.1.0"
