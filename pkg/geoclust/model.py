"""
    geoclust.model
    ~~~~~

    Declarative models of the run catalog. Table names are generated from the
    class names (``PipelineRun`` -> ``pipeline_run``).
"""
import re

import sqlalchemy as sa
from sqlalchemy import inspect, orm
from sqlalchemy.orm.decl_api import DeclarativeMeta, declared_attr

camelcase_re = re.compile(r"([A-Z]+)(?=[a-z0-9])")


def camel_to_snake_case(name):
    def _join(match):
        word = match.group()
        if len(word) > 1:
            return ("_%s_%s" % (word[:-1], word[-1])).lower()
        return "_" + word.lower()

    return camelcase_re.sub(_join, name).lstrip("_")


def should_set_tablename(cls):
    """Determine whether ``__tablename__`` should be generated for a model.

    * Abstract models and the declarative base itself get none.
    * A declared attr or an explicit name on the class itself wins.
    """
    if cls.__dict__.get("__abstract__", False) or not any(
        isinstance(b, DeclarativeMeta) for b in cls.__mro__[1:]
    ):
        return False

    for base in cls.__mro__:
        if "__tablename__" not in base.__dict__:
            continue
        if isinstance(base.__dict__["__tablename__"], declared_attr):
            return False
        return not (
            base is cls
            or base.__dict__.get("__abstract__", False)
            or not isinstance(base, DeclarativeMeta)
        )

    return True


class NameMetaMixin(object):
    def __init__(cls, classname, bases, dict_):
        if should_set_tablename(cls):
            cls.__tablename__ = camel_to_snake_case(cls.__name__)
        super().__init__(classname, bases, dict_)


class DefaultMeta(NameMetaMixin, DeclarativeMeta):
    pass


class Model(object):
    """Base class of the catalog models."""

    def __repr__(self):
        identity = inspect(self).identity
        if identity is None:
            pk = "(transient {})".format(id(self))
        else:
            pk = ", ".join(str(value) for value in identity)
        return "<{} {}>".format(type(self).__name__, pk)


Base = orm.declarative_base(cls=Model, name="Model", metaclass=DefaultMeta)


class PipelineRun(Base):
    """One pipeline execution: a (scene, method) pair and its chosen k."""

    id = sa.Column(sa.Integer, primary_key=True)
    scene = sa.Column(sa.String(255), nullable=False, index=True)
    method = sa.Column(sa.String(16), nullable=False)
    k = sa.Column(sa.Integer, nullable=False)
    k_policy = sa.Column(sa.String(16), nullable=False)
    seed = sa.Column(sa.BigInteger, nullable=False)
    latent_width = sa.Column(sa.Integer, nullable=False)
    reconstruction_loss = sa.Column(sa.Float)
    output_dir = sa.Column(sa.String(1024), nullable=False)
    config = sa.Column(sa.JSON, nullable=False)

    evaluations = orm.relationship(
        "RunEvaluation",
        back_populates="run",
        cascade="all, delete-orphan",
        order_by="RunEvaluation.variant",
    )


class RunEvaluation(Base):
    """Validity and accuracy scores of a run, for the raw or filtered map."""

    id = sa.Column(sa.Integer, primary_key=True)
    run_id = sa.Column(sa.ForeignKey(PipelineRun.id), nullable=False, index=True)
    variant = sa.Column(sa.String(16), nullable=False)
    calinski_harabasz = sa.Column(sa.Float)
    davies_bouldin = sa.Column(sa.Float)
    silhouette = sa.Column(sa.Float)
    overall_accuracy = sa.Column(sa.Float)
    adjusted_rand = sa.Column(sa.Float)

    run = orm.relationship(PipelineRun, back_populates="evaluations")

    __table_args__ = (sa.UniqueConstraint("run_id", "variant"),)
