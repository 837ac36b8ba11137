"""
    geoclust.catalog
    ~~~~~

    The run catalog: a SQL database of pipeline runs and their evaluations,
    used to compare (scene, method) pairs side by side.
"""
import logging
import os
from threading import Lock

import sqlalchemy
from sqlalchemy import orm
from sqlalchemy.engine.url import make_url

from .errors import ConfigError
from .model import Base, PipelineRun, RunEvaluation

logger = logging.getLogger(__name__)

#: Metrics :meth:`Catalog.comparison_table` can tabulate.
COMPARABLE_METRICS = (
    "k",
    "calinski_harabasz",
    "davies_bouldin",
    "silhouette",
    "overall_accuracy",
    "adjusted_rand",
)


class _EngineConnector(object):
    def __init__(self, catalog, adapter):
        self._catalog = catalog
        self._adapter = adapter
        self._engine = None
        self._connected_for = None
        self._lock = Lock()

    def get_uri(self):
        return self._adapter.config["CATALOG_DATABASE_URI"]

    def get_engine(self):
        with self._lock:
            uri = self.get_uri()
            echo = self._adapter.config["CATALOG_ECHO"]
            if (uri, echo) == self._connected_for:
                return self._engine

            sa_url = make_url(uri)
            options = self.get_options(sa_url, echo)
            self._engine = rv = sqlalchemy.create_engine(sa_url, **options)
            self._connected_for = (uri, echo)
            return rv

    def get_options(self, sa_url, echo):
        options = {}

        self._catalog.apply_driver_hacks(sa_url, options)
        if echo:
            options["echo"] = echo

        # Explicit engine options win over the defaults chosen above.
        options.update(self._adapter.config["CATALOG_ENGINE_OPTIONS"])
        return options


class CatalogAdapter(object):
    """Holds the catalog configuration, e.g.::

        adapter = CatalogAdapter()
        adapter.config["CATALOG_DATABASE_URI"] = "sqlite:///runs.db"

    ``CATALOG_DATABASE_URI`` defaults to the ``GEOCLUST_CATALOG_URI``
    environment variable.
    """

    def __init__(self, uri=None):
        self.config = dict()
        if uri is not None:
            self.config["CATALOG_DATABASE_URI"] = uri


class Catalog(object):
    """Engine and session management plus the catalog queries."""

    def __init__(self, adapter=None, uri=None):
        if adapter is None:
            adapter = CatalogAdapter(uri)
        self.adapter = adapter
        self.init_adapter(adapter)
        self._connector = _EngineConnector(self, adapter)
        self.session = orm.scoped_session(orm.sessionmaker(bind=self.engine))

    @property
    def engine(self):
        return self._connector.get_engine()

    @property
    def metadata(self):
        return Base.metadata

    def init_adapter(self, adapter):
        adapter.config.setdefault(
            "CATALOG_DATABASE_URI", os.environ.get("GEOCLUST_CATALOG_URI")
        )
        if not adapter.config["CATALOG_DATABASE_URI"]:
            raise ConfigError(
                "CATALOG_DATABASE_URI (or GEOCLUST_CATALOG_URI) needs to be set."
            )
        adapter.config.setdefault("CATALOG_ECHO", False)
        adapter.config.setdefault("CATALOG_ENGINE_OPTIONS", {})

    def apply_driver_hacks(self, sa_url, options):
        """Inject driver specific defaults into the engine options. In-memory
        SQLite shares one connection across threads so the schema survives."""
        if sa_url.drivername.startswith("sqlite"):
            pool_size = options.get("pool_size")
            if sa_url.database in (None, "", ":memory:"):
                from sqlalchemy.pool import StaticPool

                options["poolclass"] = StaticPool
                options.setdefault("connect_args", {})["check_same_thread"] = False

                if pool_size == 0:
                    raise ConfigError(
                        "SQLite in memory database with an "
                        "empty queue not possible due to data loss."
                    )
            elif not pool_size:
                from sqlalchemy.pool import NullPool

                options["poolclass"] = NullPool

    def create_all(self):
        """Creates all tables."""
        self.metadata.create_all(bind=self.engine)

    def drop_all(self):
        """Drops all tables."""
        self.metadata.drop_all(bind=self.engine)

    def record_run(self, manifest, report):
        """Store a finished pipeline run from its manifest and report documents
        and return the new run id."""
        config = manifest["config"]
        raw = report.get("raw") or {}
        run = PipelineRun(
            scene=manifest.get("scene") or os.path.basename(os.path.normpath(config["input"])),
            method=config["method"],
            k=int(manifest["k"]),
            k_policy="auto" if config.get("k") in (None, "auto") else "fixed",
            seed=int(config.get("seed", 0)),
            latent_width=int(manifest["latent_width"]),
            reconstruction_loss=_number(raw.get("extra", {}).get("reconstruction_loss")),
            output_dir=manifest["output_dir"],
            config=config,
        )
        for variant in ("raw", "filtered"):
            document = report.get(variant)
            if not document:
                continue
            run.evaluations.append(
                RunEvaluation(
                    variant=variant,
                    calinski_harabasz=_number(document.get("calinski_harabasz")),
                    davies_bouldin=_number(document.get("davies_bouldin")),
                    silhouette=_number(document.get("silhouette")),
                    overall_accuracy=_number(document.get("overall_accuracy")),
                    adjusted_rand=_number(document.get("adjusted_rand")),
                )
            )
        session = self.session()
        session.add(run)
        session.commit()
        logger.info("catalogued run %d (%s, %s)", run.id, run.scene, run.method)
        return run.id

    def latest_runs(self):
        """The most recent run of every (scene, method) pair."""
        session = self.session()
        latest = sqlalchemy.select(sqlalchemy.func.max(PipelineRun.id)).group_by(
            PipelineRun.scene, PipelineRun.method
        )
        return (
            session.query(PipelineRun)
            .filter(PipelineRun.id.in_(latest))
            .order_by(PipelineRun.scene, PipelineRun.method)
            .all()
        )

    def comparison_table(self, metric="overall_accuracy"):
        """Return ``{scene: {method: value}}`` for the latest run of every pair.
        Scores come from the filtered map when the run has one."""
        if metric not in COMPARABLE_METRICS:
            raise ConfigError(
                "metric must be one of {}, got {!r}".format(", ".join(COMPARABLE_METRICS), metric)
            )
        table = {}
        for run in self.latest_runs():
            if metric == "k":
                value = run.k
            else:
                by_variant = {e.variant: e for e in run.evaluations}
                evaluation = by_variant.get("filtered") or by_variant.get("raw")
                value = getattr(evaluation, metric) if evaluation is not None else None
            table.setdefault(run.scene, {})[run.method] = value
        return table

    def __repr__(self):
        return "<%s engine=%r>" % (self.__class__.__name__, self.engine.url)


def _number(value):
    # Reports spell non-finite scores as strings ("inf").
    return None if value is None else float(value)
