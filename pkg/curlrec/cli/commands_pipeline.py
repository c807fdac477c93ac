"""
Pipeline commands: solve, estimate, reconstruct
"""
import logging
import os

import pandas as pd

from cli.group import CommandGroup, config_from_args
from config.run_config import RunConfig
from models.broken import read_field, write_field
from models.mesh import write_mesh
from services.estimator_service import EstimatorService
from services.reconstruction_service import ReconstructionService, write_conforming
from services.report_service import export_table
from services.study_service import LevelResult, StudyService

logger = logging.getLogger(__name__)

pipeline_commands = CommandGroup('pipeline')


def _discrete_solution(config: RunConfig, study: StudyService) -> LevelResult:
    """Solve on the configured mesh, or read E_h from --field and estimate it"""
    mesh = config.build_mesh()
    if config.field is None:
        return study.solve(mesh, config.p)
    E_h = read_field(config.field, mesh)
    logger.info(f"Read degree {E_h.degree} field from {config.field}")
    estimator = EstimatorService(mesh, study.materials_on(mesh), E_h.degree)
    report = estimator.indicators(E_h, study.problem.source)
    result = LevelResult(mesh=mesh, p=E_h.degree, E_h=E_h, report=report,
                         solve_info={'ndof': E_h.ndof, 'eta_star': float('nan')})
    result.row = {'cells': mesh.num_cells, 'h_max': mesh.h_max, 'ndof': E_h.ndof, **report.totals}
    return result


@pipeline_commands.command('solve', help='assemble and solve the dG system, write E_h')
def cmd_solve(args) -> int:
    config = config_from_args(args)
    study = StudyService(config)
    result = study.solve(config.build_mesh(), config.p)
    os.makedirs(config.out, exist_ok=True)
    write_mesh(result.mesh, os.path.join(config.out, 'mesh.txt'))
    write_field(result.E_h, os.path.join(config.out, 'solution.txt'))
    row = {**result.row, **{k: v for k, v in result.solve_info.items() if k not in result.row}}
    export_table(pd.DataFrame([row]), config.out, 'solve.csv', config.echo())
    logger.info(f"Solved with {result.solve_info['method']} in {result.solve_info['iterations']} iterations")
    return 0


@pipeline_commands.command('estimate', help='per-cell indicators eta_div, eta_curl, eta_nc')
def cmd_estimate(args) -> int:
    config = config_from_args(args)
    result = _discrete_solution(config, StudyService(config))
    export_table(result.report.to_frame(), config.out, 'indicators.csv', config.echo())
    totals = result.report.totals
    logger.info(f"eta={totals['eta']:.4e} (div {totals['eta_div']:.3e}, curl {totals['eta_curl']:.3e}, "
                f"nc {totals['eta_nc']:.3e})")
    return 0


@pipeline_commands.command('reconstruct', help='patchwise H0(curl) reconstruction of E_h and its bound ratios')
def cmd_reconstruct(args) -> int:
    config = config_from_args(args)
    result = _discrete_solution(config, StudyService(config))
    service = ReconstructionService(result.mesh, q=config.q)
    E_c, solutions = service.reconstruct_with_patches(result.E_h)
    os.makedirs(config.out, exist_ok=True)
    write_conforming(E_c, os.path.join(config.out, 'reconstruction.txt'))

    ratios = service.theorem_ratios(result.E_h, E_c)
    summary = {
        'q': E_c.q,
        'ndof': E_c.ndof,
        'ratio_curl': ratios['ratio_curl'],
        'ratio_L2': ratios['ratio_L2'],
        'ratio_L2_poincare': ratios['ratio_L2_poincare'],
        'conforming_input': ratios['conforming_input'],
        **E_c.conformity_defect(),
    }
    export_table(pd.DataFrame([summary]), config.out, 'reconstruction.csv', config.echo())

    patches = [{**row, **solution.diagnostics}
               for row, solution in zip(service.patch_ratios(result.E_h, solutions), solutions)]
    export_table(pd.DataFrame(patches), config.out, 'patches.csv', config.echo())
    if ratios['conforming_input']:
        logger.info("Input field is conforming; theorem ratios are not defined")
    return 0
