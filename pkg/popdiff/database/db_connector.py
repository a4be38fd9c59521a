from sqlalchemy import create_engine  # type: ignore
from sqlalchemy.orm import sessionmaker  # type: ignore

from popdiff.config import load_config
from popdiff.database.models import Base

_sessions = {}


def make_session_factory(url=None):
    """🗄️ Фабрика сессий для архива отчётов (по умолчанию SQLite из config.yaml)."""
    url = url or load_config()["db"]["url"]
    if url not in _sessions:
        engine = create_engine(url, echo=False)  # echo=True выводит SQL в лог
        Base.metadata.create_all(engine)
        _sessions[url] = sessionmaker(autocommit=False, autoflush=False, bind=engine)
    return _sessions[url]


# Функция для работы с БД
def get_db(url=None):
    db = make_session_factory(url)()
    try:
        yield db
    finally:
        db.close()
