from ufdanet import create_app
from ufdanet.utils.log import configure_logging
from ufdanet.config import Config
import logging
import os

configure_logging(Config.LOG_LEVEL)
logger = logging.getLogger('ufdanet.run')

# Cria a aplicação Flask (checkpoint em UFDANET_CHECKPOINT)
app = create_app()

if __name__ == '__main__':
    # Configurações do servidor
    host = os.getenv('HOST', '0.0.0.0')
    port = int(os.getenv('PORT', 8000))
    debug = os.getenv('FLASK_ENV') == 'development'

    logger.info("🚀 Iniciando servidor de pontuação em http://%s:%d (debug=%s)", host, port, debug)
    logger.info("📚 Swagger: http://localhost:%d/docs", port)

    # Inicia o servidor
    app.run(
        host=host,
        port=port,
        debug=debug
    )
